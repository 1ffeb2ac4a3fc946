#pragma once

#include <span>
#include <utility>
#include <vector>

#include "garec/train.hpp"

namespace garec {

struct EvalResult {
  double rmse = 0.0;
  double mae = 0.0;
  std::int64_t n_evaluated = 0;
  // Test edges where either endpoint had an empty merged neighborhood and
  // fell back to its projected factor vector.
  std::int64_t n_cold_fallback = 0;
};

// sqrt(mean of squared differences); predictions are clamped to [1,5] before
// scoring. Throws on empty input.
double rmse(std::span<const std::pair<double, double>> pred_truth);
double mae(std::span<const std::pair<double, double>> pred_truth);

// Scores every test record with clamped predictions. Graphs and R must be
// built from train data only; test ratings are read exclusively as truths at
// the scoring step. threads > 1 splits the records into contiguous chunks
// whose partial sums are reduced in chunk order.
EvalResult evaluate(const ModelState& state, const RatingDataset& test,
                    const CoRatingGraph& graphs, const SparseRatings& R_train,
                    int threads = 1);

// Clamped dot-product predictions fu_u . fi_i. n_cold_fallback is reported
// as 0: this path has no neighborhood and therefore no fallback notion.
EvalResult evaluate_nmf_baseline(const FactorPair& fp,
                                 const RatingDataset& test);

struct CrossvalReport {
  std::vector<EvalResult> fold_results;
  double mean_rmse = 0.0;
  double stddev_rmse = 0.0;  // population standard deviation
};

// Trains and evaluates each of n_folds seeded folds with cfg.
CrossvalReport crossval(const RatingDataset& dataset, int n_folds,
                        const TrainConfig& cfg);

}  // namespace garec
