#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "garec/data.hpp"

namespace garec {

// Non-negative factors of R: fu is n x d (row u is the user's feature
// vector), fi is m x d.
struct FactorPair {
  Eigen::MatrixXd fu;
  Eigen::MatrixXd fi;
  int d = 0;
};

struct NmfConfig {
  int d = 16;
  int max_iters = 200;
  double rel_tol = 1e-4;   // stop when relative RMSE improvement falls below
  double epsilon = 1e-9;   // division guard in the multiplicative update
  std::uint64_t seed = 0;
};

// Seeded init: entries uniform in (0, sqrt(mean_rating/d)], so initial
// dot-product predictions start near the rating scale.
FactorPair random_factor_init(const SparseRatings& R, const NmfConfig& cfg);

// Masked multiplicative updates restricted to observed entries. Unobserved
// cells are missing, not zero, so both the numerator and the reconstruction
// term in the denominator run over the CSR structure only:
//   fu <- fu .* [(M.*R) fi] ./ [(M.*(fu fi^T)) fi + eps]   and symmetrically.
// Non-negativity is preserved by construction; the masked RMSE trace is
// non-increasing. Throws on d > min(n,m)/2 or a non-positive observed rating.
FactorPair factorize(const SparseRatings& R, const NmfConfig& cfg,
                     std::vector<double>* rmse_trace = nullptr);

// Same iteration from a caller-supplied starting point (init must be
// entrywise positive and dimension-consistent with R and cfg.d).
FactorPair factorize_from_init(const SparseRatings& R, FactorPair init,
                               const NmfConfig& cfg,
                               std::vector<double>* rmse_trace = nullptr);

// sqrt(mean over observed (u,i) of (r_ui - fu_u . fi_i)^2).
double masked_rmse(const SparseRatings& R, const FactorPair& fp);

}  // namespace garec
