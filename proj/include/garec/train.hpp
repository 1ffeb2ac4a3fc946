#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "garec/attn.hpp"
#include "garec/nmf.hpp"

namespace garec {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 100;
  int patience = 5;  // early-stop epochs without validation improvement
  std::uint64_t seed = 0;
  bool freeze_factors = false;
  int cap = 50;       // top-T neighbor cap
  int d = 16;         // latent dimension (NMF factors)
  int d_prime = 16;   // embedding dimension after attention
  Activation activation = Activation::Tanh;  // updater activation
  double validation_fraction = 0.1;          // carved from train; 0 disables
  bool shared_qk = true;
  int mlp_h1 = 0;  // 0 -> d
  int mlp_h2 = 0;  // 0 -> max(1, d/2)
  int threads = 1;  // 1 = deterministic reference mode
  bool record_seconds = true;  // false writes 0.0 so report files byte-compare
  int nmf_max_iters = 200;
  double nmf_rel_tol = 1e-4;
  double nmf_epsilon = 1e-9;

  NmfConfig nmf_config() const;
  void validate() const;  // throws on out-of-range fields
};

// Partial derivatives of the batch loss, shape-matched to ModelState. The
// factor blocks stay all-zero under freeze_factors.
struct GradientSet {
  Eigen::MatrixXd fu;
  Eigen::MatrixXd fi;
  AttentionParams user_attn;  // tensors reused as gradient storage
  AttentionParams item_attn;
  std::vector<MlpLayer> mlp;

  static GradientSet zeros_like(const ModelState& state);
  void set_zero();
  void add(const GradientSet& other);
  bool all_finite() const;
  double max_abs() const;
};

// Mean over the batch of (r_ui - raw_prediction)^2; raw means unclamped.
double batch_loss(std::span<const RatingRecord> batch, const EdgeContext& ctx);

// Exact partials of batch_loss for every trainable tensor, by hand-derived
// reverse-mode adjoints of the edge pipeline. The ReLU-survivor and
// below-mean mask sets are frozen at their forward values (subgradient
// convention); derivatives flow through the softmax over the surviving set
// and through both attention transforms into the touched factor rows.
// Throws on a non-finite gradient. threads > 1 accumulates over a fixed
// contiguous partition of the batch, reduced in chunk order.
GradientSet gradients(std::span<const RatingRecord> batch,
                      const EdgeContext& ctx, bool freeze_factors,
                      int threads = 1, double* loss_out = nullptr);

// Adaptive-moment state, shape-matched to the model.
struct AdamState {
  GradientSet m;
  GradientSet v;
  std::int64_t t = 0;

  static AdamState zeros_like(const ModelState& state);
};

// One adaptive-moment step (beta1 0.9, beta2 0.999, guard 1e-8) on every
// trainable tensor; factor matrices untouched when freeze_factors.
void step(ModelState& state, const GradientSet& grads, AdamState& opt,
          double lr, bool freeze_factors);

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_rmse = 0.0;  // NaN when validation_fraction == 0
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;  // epoch indices run 0, 1, ...
  int best_epoch = -1;
  double best_val_rmse = 0.0;
  // Filled by the evaluation stage when the caller wants train and test
  // numbers side by side; NaN until then.
  double final_test_rmse = 0.0;
};

// JSON lines, one epoch per line: {"epoch":..,"train_mse":..,"val_rmse":..,
// "seconds":..}, preceded by one {"config_echo":{...}} line.
void write_report_jsonl(const TrainReport& report, const TrainConfig& cfg,
                        const std::string& path);

struct FitResult {
  ModelState state;
  TrainReport report;
  // The structures the model was trained against (built from train minus the
  // validation slice); kept so callers can score edges without rebuilding.
  SparseRatings matrix;
  CoRatingGraph graphs;
};

// End-to-end training: carves a seeded validation slice, builds the rating
// matrix, co-rating graphs and NMF factors from the remainder (or takes
// init_factors as given), then runs shuffled mini-batch epochs with Adam,
// tracking validation RMSE on clamped predictions and restoring the best
// state on early stop. Deterministic given cfg.seed with threads == 1.
FitResult fit(const RatingDataset& train, const TrainConfig& cfg,
              const FactorPair* init_factors = nullptr);

}  // namespace garec
