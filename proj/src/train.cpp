#include "garec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "garec/config.hpp"
#include "garec/error.hpp"
#include "garec/eval.hpp"
#include "garec/rng.hpp"
#include "garec/threads.hpp"

namespace garec {

NmfConfig TrainConfig::nmf_config() const {
  NmfConfig c;
  c.d = d;
  c.max_iters = nmf_max_iters;
  c.rel_tol = nmf_rel_tol;
  c.epsilon = nmf_epsilon;
  c.seed = seed;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("config: learning_rate must be > 0");
  if (batch_size < 1) throw Error("config: batch_size must be >= 1");
  if (max_epochs < 1) throw Error("config: max_epochs must be >= 1");
  if (patience < 0) throw Error("config: patience must be >= 0");
  if (cap < 1) throw Error("config: T must be >= 1");
  if (d < 1) throw Error("config: d must be >= 1");
  if (d_prime < 1) throw Error("config: d_prime must be >= 1");
  if (validation_fraction < 0.0 || validation_fraction > 0.5)
    throw Error("config: validation_fraction must lie in [0, 0.5]");
  if (mlp_h1 < 0 || mlp_h2 < 0)
    throw Error("config: hidden sizes must be >= 0");
  if (threads < 1) throw Error("config: threads must be >= 1");
  if (nmf_max_iters < 1) throw Error("config: nmf_max_iters must be >= 1");
  if (nmf_rel_tol < 0.0) throw Error("config: nmf_rel_tol must be >= 0");
  if (!(nmf_epsilon > 0.0)) throw Error("config: nmf_epsilon must be > 0");
}

namespace {

// Applies fn to every tensor in the set (the empty shared-key slot is
// skipped). Kept in one place so the set-wide ops cannot drift out of sync
// with the tensor inventory.
template <typename Set, typename Fn>
void for_each_tensor(Set& g, Fn&& fn) {
  fn(g.fu);
  fn(g.fi);
  auto attn = [&fn](auto& p) {
    fn(p.w_query);
    if (p.w_key.size() != 0) fn(p.w_key);
    fn(p.w_self);
    fn(p.w_nei);
  };
  attn(g.user_attn);
  attn(g.item_attn);
  for (auto& layer : g.mlp) {
    fn(layer.weight);
    fn(layer.bias);
  }
}

template <typename SetA, typename SetB, typename Fn>
void for_each_tensor_pair(SetA& a, SetB& b, Fn&& fn) {
  fn(a.fu, b.fu);
  fn(a.fi, b.fi);
  auto attn = [&fn](auto& pa, auto& pb) {
    fn(pa.w_query, pb.w_query);
    if (pa.w_key.size() != 0) fn(pa.w_key, pb.w_key);
    fn(pa.w_self, pb.w_self);
    fn(pa.w_nei, pb.w_nei);
  };
  attn(a.user_attn, b.user_attn);
  attn(a.item_attn, b.item_attn);
  for (std::size_t l = 0; l < a.mlp.size(); ++l) {
    fn(a.mlp[l].weight, b.mlp[l].weight);
    fn(a.mlp[l].bias, b.mlp[l].bias);
  }
}

AttentionParams attn_zeros_like(const AttentionParams& p) {
  AttentionParams z;
  z.w_query = Eigen::MatrixXd::Zero(p.w_query.rows(), p.w_query.cols());
  if (p.w_key.size() != 0)
    z.w_key = Eigen::MatrixXd::Zero(p.w_key.rows(), p.w_key.cols());
  z.w_self = Eigen::MatrixXd::Zero(p.w_self.rows(), p.w_self.cols());
  z.w_nei = Eigen::MatrixXd::Zero(p.w_nei.rows(), p.w_nei.cols());
  return z;
}

}  // namespace

GradientSet GradientSet::zeros_like(const ModelState& state) {
  GradientSet g;
  g.fu = Eigen::MatrixXd::Zero(state.factors.fu.rows(), state.factors.fu.cols());
  g.fi = Eigen::MatrixXd::Zero(state.factors.fi.rows(), state.factors.fi.cols());
  g.user_attn = attn_zeros_like(state.user_attn);
  g.item_attn = attn_zeros_like(state.item_attn);
  for (const auto& layer : state.mlp.layers) {
    MlpLayer zl;
    zl.weight = Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols());
    zl.bias = Eigen::VectorXd::Zero(layer.bias.size());
    g.mlp.push_back(std::move(zl));
  }
  return g;
}

void GradientSet::set_zero() {
  for_each_tensor(*this, [](auto& t) { t.setZero(); });
}

void GradientSet::add(const GradientSet& other) {
  for_each_tensor_pair(*this, other, [](auto& a, const auto& b) { a += b; });
}

bool GradientSet::all_finite() const {
  bool ok = true;
  for_each_tensor(*this, [&ok](const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

double GradientSet::max_abs() const {
  double m = 0.0;
  for_each_tensor(*this, [&m](const auto& t) {
    if (t.size() != 0) m = std::max(m, t.cwiseAbs().maxCoeff());
  });
  return m;
}

namespace {

struct EdgeTraces {
  SideTrace user;
  SideTrace item;
  MlpTrace mlp;
  double raw = 0.0;
};

double forward_edge(int u, int i, const EdgeContext& ctx, EdgeTraces* tr) {
  const Eigen::VectorXd eu =
      embed_user_for_edge(u, i, ctx, tr ? &tr->user : nullptr);
  const Eigen::VectorXd ei =
      embed_item_for_edge(u, i, ctx, tr ? &tr->item : nullptr);
  Eigen::VectorXd x(eu.size() + ei.size());
  x << eu, ei;
  const double raw = mlp_forward(ctx.state.mlp, x, tr ? &tr->mlp : nullptr);
  if (tr) tr->raw = raw;
  return raw;
}

// Reverse pass through one side of one edge. Every step below undoes one
// forward step in reverse order; the survivor and mask sets recorded in the
// trace are held fixed.
void backward_side(const SideTrace& t, int node,
                   const Eigen::VectorXd& g_eout, const AttentionParams& p,
                   const Eigen::MatrixXd& F, Activation act, bool freeze,
                   AttentionParams& gp, Eigen::MatrixXd& gF) {
  Eigen::VectorXd g_z(t.z.size());
  for (Eigen::Index c = 0; c < t.z.size(); ++c)
    g_z[c] = g_eout[c] * activation_grad(act, t.z[c]);

  const Eigen::VectorXd f = F.row(node).transpose();

  if (t.cold) {
    // Output was act(f w_self): only w_self and the node's own row touched.
    gp.w_self += f * g_z.transpose();
    if (!freeze) gF.row(node) += (p.w_self * g_z).transpose();
    return;
  }

  // z = a_self * s_self + a_nei * f_nei
  const double g_a_self = g_z.dot(t.s_self);
  const double g_a_nei = g_z.dot(t.f_nei);
  Eigen::VectorXd g_s_self = t.a_self * g_z;
  Eigen::VectorXd g_f_nei = t.a_nei * g_z;

  // (a_self, a_nei) = softmax(rel_self, rel_nei)
  const double common = t.a_self * g_a_self + t.a_nei * g_a_nei;
  const double g_rel_self = t.a_self * (g_a_self - common);
  const double g_rel_nei = t.a_nei * (g_a_nei - common);

  // rel_self = q . s_self, rel_nei = q . h_nei
  Eigen::VectorXd g_q = g_rel_self * t.s_self + g_rel_nei * t.h_nei;
  g_s_self += g_rel_self * t.q;
  const Eigen::VectorXd g_h_nei = g_rel_nei * t.q;

  // h_nei = f_nei . w_nei
  gp.w_nei += t.f_nei * g_h_nei.transpose();
  g_f_nei += p.w_nei * g_h_nei;

  // f_nei = sum over survivors of coef_j * k_j, coefs from the softmax over
  // the surviving relevances; pruned neighbors carry zero gradient.
  std::vector<double> g_coef(t.coefs.size());
  double cg = 0.0;
  for (std::size_t s = 0; s < t.coefs.size(); ++s) {
    g_coef[s] = g_f_nei.dot(t.keys.col(t.coefs[s].first));
    cg += t.coefs[s].second * g_coef[s];
  }
  Eigen::MatrixXd& gWk = p.shared_qk() ? gp.w_query : gp.w_key;
  const Eigen::MatrixXd& wk = p.key_matrix();
  for (std::size_t s = 0; s < t.coefs.size(); ++s) {
    const int j = t.coefs[s].first;
    const double coef = t.coefs[s].second;
    const double g_rel = coef * (g_coef[s] - cg);
    const double a_j = t.neighbor_wts[static_cast<std::size_t>(j)];
    // rel_j = a_j * (q . k_j); k_j also feeds the aggregation directly.
    Eigen::VectorXd g_k = coef * g_f_nei + (g_rel * a_j) * t.q;
    g_q += (g_rel * a_j) * t.keys.col(j);
    const int y = t.neighbor_ids[static_cast<std::size_t>(j)];
    gWk += F.row(y).transpose() * g_k.transpose();
    if (!freeze) gF.row(y) += (wk * g_k).transpose();
  }

  // s_self = f . w_self and q = f . w_query close the chain at the node row.
  gp.w_self += f * g_s_self.transpose();
  gp.w_query += f * g_q.transpose();
  if (!freeze)
    gF.row(node) += (p.w_self * g_s_self + p.w_query * g_q).transpose();
}

// Accumulates d/dtheta of (r - raw)^2 for one record (unscaled by the batch
// size); returns the squared error.
double edge_backward(const RatingRecord& rec, const EdgeContext& ctx,
                     bool freeze, GradientSet& gs) {
  EdgeTraces tr;
  forward_edge(rec.user, rec.item, ctx, &tr);
  const double err = static_cast<double>(rec.rating) - tr.raw;
  const double g_raw = -2.0 * err;

  const auto& layers = ctx.state.mlp.layers;
  Eigen::VectorXd g_pre = Eigen::VectorXd::Constant(1, g_raw);
  Eigen::VectorXd g_h;
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    gs.mlp[static_cast<std::size_t>(l)].weight +=
        tr.mlp.inputs[static_cast<std::size_t>(l)] * g_pre.transpose();
    gs.mlp[static_cast<std::size_t>(l)].bias += g_pre;
    g_h = layers[static_cast<std::size_t>(l)].weight * g_pre;
    if (l > 0) {
      const Eigen::VectorXd& pre = tr.mlp.pre[static_cast<std::size_t>(l - 1)];
      g_pre.resize(g_h.size());
      for (Eigen::Index c = 0; c < g_h.size(); ++c)
        g_pre[c] = pre[c] > 0.0 ? g_h[c] : 0.0;
    }
  }
  const Eigen::Index dp = ctx.state.d_prime();
  backward_side(tr.user, rec.user, g_h.head(dp), ctx.state.user_attn,
                ctx.state.factors.fu, ctx.state.update_act, freeze,
                gs.user_attn, gs.fu);
  backward_side(tr.item, rec.item, g_h.tail(dp), ctx.state.item_attn,
                ctx.state.factors.fi, ctx.state.update_act, freeze,
                gs.item_attn, gs.fi);
  return err * err;
}

}  // namespace

double batch_loss(std::span<const RatingRecord> batch, const EdgeContext& ctx) {
  if (batch.empty()) throw Error("batch_loss: empty batch");
  double sq = 0.0;
  for (const RatingRecord& rec : batch) {
    const double raw = forward_edge(rec.user, rec.item, ctx, nullptr);
    const double err = static_cast<double>(rec.rating) - raw;
    sq += err * err;
  }
  return sq / static_cast<double>(batch.size());
}

GradientSet gradients(std::span<const RatingRecord> batch,
                      const EdgeContext& ctx, bool freeze_factors, int threads,
                      double* loss_out) {
  if (batch.empty()) throw Error("gradients: empty batch");
  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  int chunks = threads;
  if (chunks < 1) chunks = 1;
  if (chunks > n) chunks = static_cast<int>(n);

  std::vector<GradientSet> parts;
  parts.reserve(static_cast<std::size_t>(chunks));
  for (int c = 0; c < chunks; ++c)
    parts.push_back(GradientSet::zeros_like(ctx.state));
  std::vector<double> sq(static_cast<std::size_t>(chunks), 0.0);

  parallel_chunks(n, chunks, [&](int c, std::int64_t begin, std::int64_t end) {
    GradientSet& gs = parts[static_cast<std::size_t>(c)];
    double s = 0.0;
    for (std::int64_t k = begin; k < end; ++k)
      s += edge_backward(batch[static_cast<std::size_t>(k)], ctx,
                         freeze_factors, gs);
    sq[static_cast<std::size_t>(c)] = s;
  });

  GradientSet total = std::move(parts[0]);
  double sq_total = sq[0];
  for (int c = 1; c < chunks; ++c) {
    total.add(parts[static_cast<std::size_t>(c)]);
    sq_total += sq[static_cast<std::size_t>(c)];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for_each_tensor(total, [inv](auto& t) { t *= inv; });
  if (!total.all_finite())
    throw Error("gradients: non-finite gradient (training diverged)");
  if (loss_out) *loss_out = sq_total * inv;
  return total;
}

AdamState AdamState::zeros_like(const ModelState& state) {
  AdamState a;
  a.m = GradientSet::zeros_like(state);
  a.v = GradientSet::zeros_like(state);
  a.t = 0;
  return a;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamGuard = 1e-8;

template <typename Fn>
void visit_params(ModelState& s, const GradientSet& g, AdamState& opt,
                  bool freeze, Fn&& fn) {
  if (!freeze) {
    fn(s.factors.fu, g.fu, opt.m.fu, opt.v.fu);
    fn(s.factors.fi, g.fi, opt.m.fi, opt.v.fi);
  }
  auto attn = [&fn](AttentionParams& sp, const AttentionParams& gp,
                    AttentionParams& mp, AttentionParams& vp) {
    fn(sp.w_query, gp.w_query, mp.w_query, vp.w_query);
    if (sp.w_key.size() != 0) fn(sp.w_key, gp.w_key, mp.w_key, vp.w_key);
    fn(sp.w_self, gp.w_self, mp.w_self, vp.w_self);
    fn(sp.w_nei, gp.w_nei, mp.w_nei, vp.w_nei);
  };
  attn(s.user_attn, g.user_attn, opt.m.user_attn, opt.v.user_attn);
  attn(s.item_attn, g.item_attn, opt.m.item_attn, opt.v.item_attn);
  for (std::size_t l = 0; l < s.mlp.layers.size(); ++l) {
    fn(s.mlp.layers[l].weight, g.mlp[l].weight, opt.m.mlp[l].weight,
       opt.v.mlp[l].weight);
    fn(s.mlp.layers[l].bias, g.mlp[l].bias, opt.m.mlp[l].bias,
       opt.v.mlp[l].bias);
  }
}

}  // namespace

void step(ModelState& state, const GradientSet& grads, AdamState& opt,
          double lr, bool freeze_factors) {
  opt.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(opt.t));
  visit_params(state, grads, opt, freeze_factors,
               [lr, bc1, bc2](auto& p, const auto& g, auto& m, auto& v) {
                 m = kBeta1 * m + (1.0 - kBeta1) * g;
                 v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
                 p.array() -= lr * (m.array() / bc1) /
                              ((v.array() / bc2).sqrt() + kAdamGuard);
               });
}

void write_report_jsonl(const TrainReport& report, const TrainConfig& cfg,
                        const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_report_jsonl: cannot open " + path);
  os << "{\"config_echo\":" << config_echo_json(cfg) << "}\n";
  for (const EpochStats& e : report.epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["train_mse"] = e.train_mse;
    j["val_rmse"] = e.val_rmse;  // NaN serializes as null
    j["seconds"] = e.seconds;
    os << j.dump() << '\n';
  }
  if (!os) throw Error("write_report_jsonl: write failed for " + path);
}

FitResult fit(const RatingDataset& train, const TrainConfig& cfg,
              const FactorPair* init_factors) {
  cfg.validate();
  if (train.records.empty()) throw Error("fit: empty training set");

  RatingDataset fit_part;
  RatingDataset val_part;
  if (cfg.validation_fraction > 0.0) {
    SplitSpec vs;
    vs.train_fraction = 1.0 - cfg.validation_fraction;
    vs.seed = derive_seed(cfg.seed, /*tag=*/4);
    auto parts = split(train, vs);
    fit_part = std::move(parts.first);
    val_part = std::move(parts.second);
  } else {
    fit_part = train;
  }
  const bool has_val = !val_part.records.empty();
  if (fit_part.records.empty())
    throw Error("fit: nothing left to train on after the validation carve");

  SparseRatings R = build_matrix(fit_part);
  CoRatingGraph graphs = build_corating_graph(R, cfg.cap, cfg.threads);

  FactorPair factors;
  if (init_factors) {
    if (init_factors->d != cfg.d)
      throw Error("fit: supplied factors have d=" +
                  std::to_string(init_factors->d) + " but config expects d=" +
                  std::to_string(cfg.d));
    if (init_factors->fu.rows() != train.n_users ||
        init_factors->fi.rows() != train.n_items)
      throw Error("fit: supplied factors do not cover this dataset");
    factors = *init_factors;
  } else {
    factors = factorize(R, cfg.nmf_config());
  }

  ModelInit mi;
  mi.d_prime = cfg.d_prime;
  mi.mlp_h1 = cfg.mlp_h1;
  mi.mlp_h2 = cfg.mlp_h2;
  mi.shared_qk = cfg.shared_qk;
  mi.update_act = cfg.activation;
  mi.seed = derive_seed(cfg.seed, /*tag=*/5);
  ModelState state = init_model(std::move(factors), mi);
  // Center the predictor on the observed mean so the first epochs refine
  // residuals instead of dragging the output up from zero.
  state.mlp.layers.back().bias(0) = fit_part.mean_rating();
  EdgeContext ctx{state, graphs, R};

  AdamState opt = AdamState::zeros_like(state);
  Rng order_rng(derive_seed(cfg.seed, /*tag=*/6));
  std::vector<std::int64_t> order(fit_part.records.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  ModelState best_state = state;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_best = 0;
  const std::int64_t n = static_cast<std::int64_t>(fit_part.records.size());

  std::vector<RatingRecord> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(order, order_rng);
    double sq_total = 0.0;
    for (std::int64_t pos = 0; pos < n; pos += cfg.batch_size) {
      const std::int64_t stop = std::min<std::int64_t>(pos + cfg.batch_size, n);
      batch.clear();
      for (std::int64_t k = pos; k < stop; ++k)
        batch.push_back(
            fit_part.records[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
      double loss = 0.0;
      GradientSet g = gradients(batch, ctx, cfg.freeze_factors, cfg.threads,
                                &loss);
      sq_total += loss * static_cast<double>(batch.size());
      step(state, g, opt, cfg.learning_rate, cfg.freeze_factors);
    }

    EpochStats es;
    es.epoch = epoch;
    es.train_mse = sq_total / static_cast<double>(n);
    es.val_rmse = std::numeric_limits<double>::quiet_NaN();
    if (has_val)
      es.val_rmse = evaluate(state, val_part, graphs, R, cfg.threads).rmse;
    const auto t1 = std::chrono::steady_clock::now();
    es.seconds = cfg.record_seconds
                     ? std::chrono::duration<double>(t1 - t0).count()
                     : 0.0;
    report.epochs.push_back(es);

    if (has_val) {
      if (es.val_rmse < best_val) {
        best_val = es.val_rmse;
        best_epoch = epoch;
        best_state = state;
        since_best = 0;
      } else {
        ++since_best;
        if (cfg.patience > 0 && since_best >= cfg.patience) break;
      }
    }
  }

  if (has_val) {
    state = std::move(best_state);
    report.best_epoch = best_epoch;
    report.best_val_rmse = best_val;
  } else {
    report.best_epoch = static_cast<int>(report.epochs.size()) - 1;
    report.best_val_rmse = std::numeric_limits<double>::quiet_NaN();
  }
  report.final_test_rmse = std::numeric_limits<double>::quiet_NaN();

  FitResult out;
  out.state = std::move(state);
  out.report = std::move(report);
  out.matrix = std::move(R);
  out.graphs = std::move(graphs);
  return out;
}

}  // namespace garec
