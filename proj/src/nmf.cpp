#include "garec/nmf.hpp"

#include <cmath>

#include "garec/error.hpp"
#include "garec/rng.hpp"

namespace garec {

namespace {

void check_cfg(const SparseRatings& R, const NmfConfig& cfg) {
  if (cfg.d < 1) throw Error("nmf: d must be >= 1");
  if (cfg.max_iters < 1) throw Error("nmf: max_iters must be >= 1");
  if (!(cfg.epsilon > 0.0)) throw Error("nmf: epsilon must be > 0");
  int lo = std::min(R.n_users, R.n_items);
  if (2 * cfg.d > lo)
    throw Error("nmf: d=" + std::to_string(cfg.d) +
                " exceeds min(n,m)/2 with min(n,m)=" + std::to_string(lo));
}

void check_ratings_positive(const SparseRatings& R) {
  if (R.nnz() == 0) throw Error("nmf: empty rating matrix");
  for (double v : R.user_vals)
    if (!(v > 0.0)) throw Error("nmf: non-positive observed rating");
}

}  // namespace

FactorPair random_factor_init(const SparseRatings& R, const NmfConfig& cfg) {
  check_cfg(R, cfg);
  double mean = 0.0;
  for (double v : R.user_vals) mean += v;
  mean /= static_cast<double>(R.nnz());
  const double hi = std::sqrt(mean / static_cast<double>(cfg.d));

  FactorPair fp;
  fp.d = cfg.d;
  fp.fu.resize(R.n_users, cfg.d);
  fp.fi.resize(R.n_items, cfg.d);
  Rng rng(derive_seed(cfg.seed, /*tag=*/2));
  // Entries in (0, hi]: 1 - uniform() keeps them strictly positive.
  for (int u = 0; u < R.n_users; ++u)
    for (int k = 0; k < cfg.d; ++k) fp.fu(u, k) = hi * (1.0 - rng.uniform());
  for (int i = 0; i < R.n_items; ++i)
    for (int k = 0; k < cfg.d; ++k) fp.fi(i, k) = hi * (1.0 - rng.uniform());
  return fp;
}

double masked_rmse(const SparseRatings& R, const FactorPair& fp) {
  if (fp.fu.rows() != R.n_users || fp.fi.rows() != R.n_items ||
      fp.fu.cols() != fp.d || fp.fi.cols() != fp.d)
    throw Error("masked_rmse: dimension mismatch");
  if (R.nnz() == 0) return 0.0;
  double sum = 0.0;
  for (int u = 0; u < R.n_users; ++u) {
    auto ids = R.items_of(u);
    auto vals = R.ratings_of_user(u);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      double pred = fp.fu.row(u).dot(fp.fi.row(ids[k]));
      double e = vals[k] - pred;
      sum += e * e;
    }
  }
  return std::sqrt(sum / static_cast<double>(R.nnz()));
}

FactorPair factorize_from_init(const SparseRatings& R, FactorPair fp,
                               const NmfConfig& cfg,
                               std::vector<double>* rmse_trace) {
  check_cfg(R, cfg);
  check_ratings_positive(R);
  if (fp.d != cfg.d || fp.fu.rows() != R.n_users || fp.fi.rows() != R.n_items)
    throw Error("factorize_from_init: init dimensions disagree with R/cfg");
  if ((fp.fu.array() < 0.0).any() || (fp.fi.array() < 0.0).any())
    throw Error("factorize_from_init: negative init entry");

  const int d = cfg.d;
  Eigen::MatrixXd num(R.n_users, d), den(R.n_users, d);
  Eigen::MatrixXd num_i(R.n_items, d), den_i(R.n_items, d);

  double prev = masked_rmse(R, fp);
  if (rmse_trace) {
    rmse_trace->clear();
    rmse_trace->push_back(prev);
  }

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    // User factor update on the by-user view.
    num.setZero();
    den.setZero();
    for (int u = 0; u < R.n_users; ++u) {
      auto ids = R.items_of(u);
      auto vals = R.ratings_of_user(u);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto fi_row = fp.fi.row(ids[k]);
        double pred = fp.fu.row(u).dot(fi_row);
        num.row(u) += vals[k] * fi_row;
        den.row(u) += pred * fi_row;
      }
    }
    fp.fu.array() *= num.array() / (den.array() + cfg.epsilon);

    // Item factor update with the refreshed user factors.
    num_i.setZero();
    den_i.setZero();
    for (int i = 0; i < R.n_items; ++i) {
      auto ids = R.users_of(i);
      auto vals = R.ratings_of_item(i);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto fu_row = fp.fu.row(ids[k]);
        double pred = fu_row.dot(fp.fi.row(i));
        num_i.row(i) += vals[k] * fu_row;
        den_i.row(i) += pred * fu_row;
      }
    }
    fp.fi.array() *= num_i.array() / (den_i.array() + cfg.epsilon);

    double cur = masked_rmse(R, fp);
    if (rmse_trace) rmse_trace->push_back(cur);
    if (prev > 0.0 && (prev - cur) / prev < cfg.rel_tol) {
      prev = cur;
      break;
    }
    prev = cur;
  }
  return fp;
}

FactorPair factorize(const SparseRatings& R, const NmfConfig& cfg,
                     std::vector<double>* rmse_trace) {
  return factorize_from_init(R, random_factor_init(R, cfg), cfg, rmse_trace);
}

}  // namespace garec
