#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "garec/checkpoint.hpp"
#include "garec/config.hpp"
#include "garec/data.hpp"
#include "garec/error.hpp"
#include "garec/eval.hpp"
#include "garec/graph.hpp"
#include "garec/nmf.hpp"
#include "garec/train.hpp"

using namespace garec;

namespace {

RatingsFormat parse_format(const std::string& s) {
  if (s == "tab100k") return RatingsFormat::Tab100k;
  if (s == "sep1m") return RatingsFormat::Sep1m;
  throw Error("unknown format '" + s + "' (expected tab100k or sep1m)");
}

// --set key=value overrides, applied after the config file in flag order.
void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw Error("--set expects key=value, got '" + kv + "'");
    apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

nlohmann::json eval_to_json(const EvalResult& er) {
  nlohmann::json j;
  j["rmse"] = er.rmse;
  j["mae"] = er.mae;
  j["n_evaluated"] = er.n_evaluated;
  j["n_cold_fallback"] = er.n_cold_fallback;
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << j.dump(2) << '\n';
  if (!os) throw Error("write failed for " + path);
}

struct PrepareArgs {
  std::string input, format, out;
  double split = 0.8;
  std::uint64_t seed = 0;
  int folds = 0;
};

int run_prepare(const PrepareArgs& a) {
  const RatingsFormat fmt = parse_format(a.format);
  RatingDataset ds = parse_ratings(a.input, fmt);

  SplitSpec spec;
  spec.train_fraction = a.split;
  spec.seed = a.seed;
  auto [train, test] = split(ds, spec);

  PreparedMeta meta;
  meta.n_users = ds.n_users;
  meta.n_items = ds.n_items;
  meta.n_records = static_cast<std::int64_t>(ds.records.size());
  meta.train_fraction = a.split;
  meta.seed = a.seed;
  meta.folds = a.folds;
  meta.source_format = a.format;
  save_prepared(a.out, meta, train, test);

  if (a.folds >= 2) {
    for (int k = 0; k < a.folds; ++k) {
      SplitSpec fs;
      fs.n_folds = a.folds;
      fs.fold_index = k;
      fs.seed = a.seed;
      auto [ftr, fte] = split(ds, fs);
      const std::string stem = a.out + "/fold" + std::to_string(k);
      write_canonical_csv(ftr, stem + "_train.csv");
      write_canonical_csv(fte, stem + "_test.csv");
    }
  }

  std::cout << "prepared " << ds.records.size() << " ratings (" << ds.n_users
            << " users, " << ds.n_items << " items) into " << a.out << ": "
            << train.records.size() << " train / " << test.records.size()
            << " test";
  if (a.folds >= 2) std::cout << ", " << a.folds << " cv folds";
  std::cout << '\n';
  return 0;
}

struct FactorizeArgs {
  std::string data, out;
  int d = 16;
  int iters = 200;
  std::uint64_t seed = 0;
};

int run_factorize(const FactorizeArgs& a) {
  RatingDataset train = load_prepared_part(a.data, "train");
  SparseRatings R = build_matrix(train);
  NmfConfig cfg;
  cfg.d = a.d;
  cfg.max_iters = a.iters;
  cfg.seed = a.seed;
  std::vector<double> trace;
  FactorPair fp = factorize(R, cfg, &trace);
  save_factors(fp, a.seed, a.out);
  std::cout << "factorized " << R.n_users << "x" << R.n_items << " at d="
            << a.d << " in " << trace.size() << " iterations, train rmse "
            << masked_rmse(R, fp) << ", saved " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string data, factors, config, out, report;
  std::vector<std::string> sets;
};

TrainConfig build_config(const std::string& config_path,
                         const std::vector<std::string>& sets) {
  TrainConfig cfg;
  if (!config_path.empty()) apply_config_file(cfg, config_path);
  apply_overrides(cfg, sets);
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a) {
  TrainConfig cfg = build_config(a.config, a.sets);
  RatingDataset train = load_prepared_part(a.data, "train");

  std::optional<FactorPair> init;
  if (!a.factors.empty()) init = load_factors(a.factors, cfg.d);

  FitResult fr = fit(train, cfg, init ? &*init : nullptr);
  save_model(fr.state, cfg.seed, cfg.freeze_factors, a.out,
             config_echo_json(cfg));
  if (!a.report.empty()) write_report_jsonl(fr.report, cfg, a.report);

  std::cout << "trained " << fr.report.epochs.size() << " epochs";
  if (fr.report.best_epoch >= 0 && cfg.validation_fraction > 0.0)
    std::cout << ", best epoch " << fr.report.best_epoch << " (val rmse "
              << fr.report.best_val_rmse << ")";
  std::cout << ", saved " << a.out << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string data, model, out;
  int threads = 0;  // 0: take the thread count the model was trained with
};

int run_evaluate(const EvaluateArgs& a) {
  std::uint64_t seed = 0;
  bool freeze = false;
  std::string echo;
  ModelState state = load_model(a.model, std::nullopt, &seed, &freeze, &echo);

  // the stored echo replays onto a default config, recovering T and threads
  TrainConfig cfg;
  nlohmann::json echo_json;
  if (!echo.empty()) {
    echo_json = nlohmann::json::parse(echo);
    for (const auto& [key, value] : echo_json.items())
      apply_config_line(cfg, key,
                        value.is_string() ? value.get<std::string>()
                                          : value.dump());
  }
  const int threads = a.threads > 0 ? a.threads : cfg.threads;

  PreparedMeta meta = load_prepared_meta(a.data);
  RatingDataset train = load_prepared_part(a.data, "train");
  RatingDataset test = load_prepared_part(a.data, "test");
  SparseRatings R = build_matrix(train);
  CoRatingGraph graphs = build_corating_graph(R, cfg.cap, threads);

  EvalResult er = evaluate(state, test, graphs, R, threads);

  nlohmann::json j = eval_to_json(er);
  j["split"] = meta.train_fraction;
  j["seed"] = seed;
  j["config_echo"] = echo.empty() ? nlohmann::json(nullptr) : echo_json;
  write_json(a.out, j);
  std::cout << "evaluated " << er.n_evaluated << " edges: rmse " << er.rmse
            << ", mae " << er.mae << ", " << er.n_cold_fallback
            << " cold fallbacks, wrote " << a.out << '\n';
  return 0;
}

struct BaselineArgs {
  std::string data, factors, out;
};

int run_baseline(const BaselineArgs& a) {
  std::uint64_t seed = 0;
  FactorPair fp = load_factors(a.factors, std::nullopt, &seed);
  PreparedMeta meta = load_prepared_meta(a.data);
  RatingDataset test = load_prepared_part(a.data, "test");

  EvalResult er = evaluate_nmf_baseline(fp, test);

  nlohmann::json j = eval_to_json(er);
  j["split"] = meta.train_fraction;
  j["seed"] = seed;
  j["config_echo"] = {{"d", fp.d}, {"seed", seed}};
  write_json(a.out, j);
  std::cout << "baseline rmse " << er.rmse << ", mae " << er.mae << " on "
            << er.n_evaluated << " edges, wrote " << a.out << '\n';
  return 0;
}

struct CrossvalArgs {
  std::string input, format, config, out;
  int folds = 5;
  std::vector<std::string> sets;
};

int run_crossval(const CrossvalArgs& a) {
  TrainConfig cfg = build_config(a.config, a.sets);
  RatingDataset ds = parse_ratings(a.input, parse_format(a.format));

  CrossvalReport cr = crossval(ds, a.folds, cfg);

  nlohmann::json folds = nlohmann::json::array();
  for (const EvalResult& er : cr.fold_results) folds.push_back(eval_to_json(er));
  nlohmann::json j;
  j["folds"] = folds;
  j["n_folds"] = a.folds;
  j["mean_rmse"] = cr.mean_rmse;
  j["stddev_rmse"] = cr.stddev_rmse;
  j["config_echo"] = nlohmann::json::parse(config_echo_json(cfg));
  write_json(a.out, j);

  std::cout << a.folds << "-fold cv: mean rmse " << cr.mean_rmse
            << " (stddev " << cr.stddev_rmse << "), wrote " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rating prediction with attention over co-rating graphs"};
  app.require_subcommand(1);

  PrepareArgs pa;
  CLI::App* prepare = app.add_subcommand("prepare", "split a ratings file");
  prepare->add_option("--input", pa.input, "raw ratings file")->required();
  prepare->add_option("--format", pa.format, "tab100k or sep1m")
      ->required()
      ->check(CLI::IsMember({"tab100k", "sep1m"}));
  prepare->add_option("--out", pa.out, "output directory")->required();
  prepare->add_option("--split", pa.split, "train fraction (default 0.8)");
  prepare->add_option("--seed", pa.seed, "shuffle seed");
  prepare->add_option("--folds", pa.folds, "also write this many cv folds");

  FactorizeArgs fa;
  CLI::App* factorize = app.add_subcommand("factorize", "fit the factor baseline");
  factorize->add_option("--data", fa.data, "prepared directory")->required();
  factorize->add_option("--d", fa.d, "latent dimension (default 16)");
  factorize->add_option("--iters", fa.iters, "max iterations (default 200)");
  factorize->add_option("--seed", fa.seed, "init seed");
  factorize->add_option("--out", fa.out, "factors checkpoint path")->required();

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train the full model");
  train->add_option("--data", ta.data, "prepared directory")->required();
  train->add_option("--factors", ta.factors, "precomputed factors checkpoint");
  train->add_option("--config", ta.config, "flat key = value config file");
  train->add_option("--out", ta.out, "model checkpoint path")->required();
  train->add_option("--report", ta.report, "per-epoch jsonl report path");
  train->add_option("--set", ta.sets, "override config key=value (repeatable)");

  EvaluateArgs ea;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a model on the test split");
  evaluate->add_option("--data", ea.data, "prepared directory")->required();
  evaluate->add_option("--model", ea.model, "model checkpoint")->required();
  evaluate->add_option("--out", ea.out, "result json path")->required();
  evaluate->add_option("--threads", ea.threads,
                       "evaluation threads (default: as trained)");

  BaselineArgs ba;
  CLI::App* baseline = app.add_subcommand("baseline-nmf", "score the factor baseline");
  baseline->add_option("--data", ba.data, "prepared directory")->required();
  baseline->add_option("--factors", ba.factors, "factors checkpoint")->required();
  baseline->add_option("--out", ba.out, "result json path")->required();

  CrossvalArgs ca;
  CLI::App* cv = app.add_subcommand("crossval", "k-fold train/evaluate");
  cv->add_option("--input", ca.input, "raw ratings file")->required();
  cv->add_option("--format", ca.format, "tab100k or sep1m")
      ->required()
      ->check(CLI::IsMember({"tab100k", "sep1m"}));
  cv->add_option("--folds", ca.folds, "fold count (default 5)");
  cv->add_option("--config", ca.config, "flat key = value config file");
  cv->add_option("--out", ca.out, "cv report json path")->required();
  cv->add_option("--set", ca.sets, "override config key=value (repeatable)");

  try {
    app.parse(argc, argv);
    if (prepare->parsed()) return run_prepare(pa);
    if (factorize->parsed()) return run_factorize(fa);
    if (train->parsed()) return run_train(ta);
    if (evaluate->parsed()) return run_evaluate(ea);
    if (baseline->parsed()) return run_baseline(ba);
    if (cv->parsed()) return run_crossval(ca);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
