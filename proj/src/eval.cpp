#include "garec/eval.hpp"

#include <algorithm>
#include <cmath>

#include "garec/error.hpp"
#include "garec/threads.hpp"

namespace garec {

double rmse(std::span<const std::pair<double, double>> pred_truth) {
  if (pred_truth.empty()) throw Error("rmse: empty input");
  double sq = 0.0;
  for (const auto& [pred, truth] : pred_truth) {
    const double p = std::min(std::max(pred, 1.0), 5.0);
    sq += (p - truth) * (p - truth);
  }
  return std::sqrt(sq / static_cast<double>(pred_truth.size()));
}

double mae(std::span<const std::pair<double, double>> pred_truth) {
  if (pred_truth.empty()) throw Error("mae: empty input");
  double abs = 0.0;
  for (const auto& [pred, truth] : pred_truth) {
    const double p = std::min(std::max(pred, 1.0), 5.0);
    abs += std::abs(p - truth);
  }
  return abs / static_cast<double>(pred_truth.size());
}

EvalResult evaluate(const ModelState& state, const RatingDataset& test,
                    const CoRatingGraph& graphs, const SparseRatings& R_train,
                    int threads) {
  if (test.records.empty()) throw Error("evaluate: empty test set");
  const EdgeContext ctx{state, graphs, R_train};
  const std::int64_t n = static_cast<std::int64_t>(test.records.size());
  int chunks = threads;
  if (chunks < 1) chunks = 1;
  if (chunks > n) chunks = static_cast<int>(n);

  struct Partial {
    double sq = 0.0;
    double abs = 0.0;
    std::int64_t cold = 0;
  };
  std::vector<Partial> parts(static_cast<std::size_t>(chunks));
  parallel_chunks(n, chunks, [&](int c, std::int64_t begin, std::int64_t end) {
    Partial& p = parts[static_cast<std::size_t>(c)];
    for (std::int64_t k = begin; k < end; ++k) {
      const RatingRecord& rec = test.records[static_cast<std::size_t>(k)];
      const EdgePrediction ep = predict_edge_raw(rec.user, rec.item, ctx);
      const double pred = clamp_rating(ep.raw, state);
      const double err = pred - static_cast<double>(rec.rating);
      p.sq += err * err;
      p.abs += std::abs(err);
      if (ep.user_cold || ep.item_cold) ++p.cold;
    }
  });

  EvalResult out;
  double sq = 0.0, abs = 0.0;
  for (const Partial& p : parts) {
    sq += p.sq;
    abs += p.abs;
    out.n_cold_fallback += p.cold;
  }
  out.n_evaluated = n;
  out.rmse = std::sqrt(sq / static_cast<double>(n));
  out.mae = abs / static_cast<double>(n);
  return out;
}

EvalResult evaluate_nmf_baseline(const FactorPair& fp,
                                 const RatingDataset& test) {
  if (test.records.empty())
    throw Error("evaluate_nmf_baseline: empty test set");
  if (fp.fu.rows() < test.n_users || fp.fi.rows() < test.n_items)
    throw Error("evaluate_nmf_baseline: factors do not cover this dataset");
  double sq = 0.0, abs = 0.0;
  for (const RatingRecord& rec : test.records) {
    const double raw = fp.fu.row(rec.user).dot(fp.fi.row(rec.item));
    const double pred = std::min(std::max(raw, 1.0), 5.0);
    const double err = pred - static_cast<double>(rec.rating);
    sq += err * err;
    abs += std::abs(err);
  }
  EvalResult out;
  out.n_evaluated = static_cast<std::int64_t>(test.records.size());
  out.rmse = std::sqrt(sq / static_cast<double>(out.n_evaluated));
  out.mae = abs / static_cast<double>(out.n_evaluated);
  out.n_cold_fallback = 0;  // dot-product predictions have no fallback notion
  return out;
}

CrossvalReport crossval(const RatingDataset& dataset, int n_folds,
                        const TrainConfig& cfg) {
  if (n_folds < 2) throw Error("crossval: n_folds must be >= 2");
  CrossvalReport report;
  for (int k = 0; k < n_folds; ++k) {
    SplitSpec spec;
    spec.fold_index = k;
    spec.n_folds = n_folds;
    spec.seed = cfg.seed;
    auto [train_k, test_k] = split(dataset, spec);
    FitResult fitted = fit(train_k, cfg);
    // Score against structures rebuilt from the whole fold-train split, not
    // the train-minus-validation subset the optimizer saw.
    SparseRatings R = build_matrix(train_k);
    CoRatingGraph graphs = build_corating_graph(R, cfg.cap, cfg.threads);
    report.fold_results.push_back(
        evaluate(fitted.state, test_k, graphs, R, cfg.threads));
  }
  double sum = 0.0;
  for (const EvalResult& r : report.fold_results) sum += r.rmse;
  report.mean_rmse = sum / static_cast<double>(n_folds);
  double var = 0.0;
  for (const EvalResult& r : report.fold_results)
    var += (r.rmse - report.mean_rmse) * (r.rmse - report.mean_rmse);
  report.stddev_rmse = std::sqrt(var / static_cast<double>(n_folds));
  return report;
}

}  // namespace garec
