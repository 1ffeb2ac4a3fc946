#pragma once

// Central finite-difference verification of the analytic gradients. A
// parameter whose +/-h perturbation crosses a survivor-set or rectifier
// boundary sits on a non-smooth point and is excluded (the analytic pass
// freezes those sets by convention, so finite differences disagree there by
// construction, not by error).

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bridge.hpp"
#include "garec/train.hpp"
#include "synth.hpp"

namespace gradcheck {

struct Result {
  double max_rel = 0.0;
  long checked = 0;
  long skipped = 0;
};

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;
// Guards the relative-error denominator: differences between two near-zero
// gradients are finite-difference noise, not defects.
constexpr double kDenomFloor = 1e-6;

inline Result check_instance(synth::TinyInstance& inst,
                             std::span<const garec::RatingRecord> batch) {
  Result res;
  const garec::EdgeContext ctx{inst.state, inst.graphs, inst.R};
  const garec::GradientSet g = garec::gradients(batch, ctx, false, 1);
  const std::vector<double> analytic = bridge::grad_values(g);
  std::vector<double*> ps = bridge::param_ptrs(inst.state);
  const std::vector<int> base_sig = bridge::mask_signature(batch, ctx);

  for (std::size_t k = 0; k < ps.size(); ++k) {
    const double orig = *ps[k];
    *ps[k] = orig + kStep;
    const std::vector<int> sig_plus = bridge::mask_signature(batch, ctx);
    const double loss_plus = garec::batch_loss(batch, ctx);
    *ps[k] = orig - kStep;
    const std::vector<int> sig_minus = bridge::mask_signature(batch, ctx);
    const double loss_minus = garec::batch_loss(batch, ctx);
    *ps[k] = orig;
    if (sig_plus != base_sig || sig_minus != base_sig) {
      ++res.skipped;
      continue;
    }
    const double fd = (loss_plus - loss_minus) / (2.0 * kStep);
    const double a = analytic[k];
    const double denom = std::max(std::abs(a) + std::abs(fd), kDenomFloor);
    const double rel = std::abs(a - fd) / denom;
    if (rel > res.max_rel) res.max_rel = rel;
    ++res.checked;
  }
  return res;
}

// The criterion sweep: seeded instances with n,m <= 6 and d <= 4, covering
// every activation and both query/key sharing modes.
inline Result sweep(std::uint64_t base_seed, int n_instances) {
  Result total;
  for (int t = 0; t < n_instances; ++t) {
    const std::uint64_t seed = base_seed + 1000u * static_cast<unsigned>(t);
    garec::Rng rng(seed);
    const int n = 2 + static_cast<int>(rng.below(5));   // 2..6
    const int m = 2 + static_cast<int>(rng.below(5));
    const int d = 1 + static_cast<int>(rng.below(4));   // 1..4
    const int dp = 1 + static_cast<int>(rng.below(4));
    const int cap = 1 + static_cast<int>(rng.below(6));
    const garec::Activation acts[3] = {garec::Activation::Tanh,
                                       garec::Activation::Relu,
                                       garec::Activation::Identity};
    synth::TinyInstance inst = synth::tiny_instance(
        seed, n, m, d, dp, cap, acts[t % 3], (t % 2) == 0);
    std::vector<garec::RatingRecord> batch = inst.data.records;
    if (batch.size() > 8) batch.resize(8);
    const Result r = check_instance(inst, batch);
    total.max_rel = std::max(total.max_rel, r.max_rel);
    total.checked += r.checked;
    total.skipped += r.skipped;
  }
  return total;
}

}  // namespace gradcheck
