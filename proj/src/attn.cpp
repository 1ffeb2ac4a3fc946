#include "garec/attn.hpp"

#include <algorithm>
#include <cmath>

#include "garec/error.hpp"

namespace garec {

Eigen::VectorXd transform(const Eigen::VectorXd& f, const Eigen::MatrixXd& W) {
  if (f.size() != W.rows())
    throw Error("transform: vector length " + std::to_string(f.size()) +
                " does not match matrix rows " + std::to_string(W.rows()));
  return W.transpose() * f;
}

double relevance(const Eigen::VectorXd& q, const Eigen::VectorXd& k, double a) {
  return a * q.dot(k);
}

std::vector<std::pair<int, double>> attention_coefs(
    const std::vector<double>& rels) {
  // Rectifier pruning: only strictly positive relevances survive.
  std::vector<int> survivors;
  survivors.reserve(rels.size());
  double sum = 0.0;
  for (int j = 0; j < static_cast<int>(rels.size()); ++j) {
    if (rels[j] > 0.0) {
      survivors.push_back(j);
      sum += rels[j];
    }
  }
  if (survivors.empty()) return {};

  // Keep survivors at or above the survivor mean. In exact arithmetic at
  // least the maximum survives; under rounding the computed mean can edge
  // past the maximum when all survivors are equal, so fall back to the
  // largest entry in that case.
  const double mean = sum / static_cast<double>(survivors.size());
  std::vector<int> kept;
  kept.reserve(survivors.size());
  for (int j : survivors)
    if (rels[j] >= mean) kept.push_back(j);
  if (kept.empty()) {
    int best = survivors[0];
    for (int j : survivors)
      if (rels[j] > rels[best]) best = j;
    kept.push_back(best);
  }

  double hi = rels[kept[0]];
  for (int j : kept) hi = std::max(hi, rels[j]);
  double z = 0.0;
  std::vector<std::pair<int, double>> out;
  out.reserve(kept.size());
  for (int j : kept) {
    const double e = std::exp(rels[j] - hi);
    out.emplace_back(j, e);
    z += e;
  }
  for (auto& [j, coef] : out) coef /= z;
  return out;
}

Eigen::VectorXd aggregate(const std::vector<std::pair<int, double>>& coefs,
                          const Eigen::MatrixXd& keys) {
  Eigen::VectorXd f_nei = Eigen::VectorXd::Zero(keys.rows());
  for (const auto& [j, coef] : coefs) {
    if (j < 0 || j >= keys.cols())
      throw Error("aggregate: coefficient index out of range");
    f_nei += coef * keys.col(j);
  }
  return f_nei;
}

namespace {

// Updater core shared by the public update() and the per-edge embedding.
Eigen::VectorXd run_update(const Eigen::VectorXd& f,
                           const Eigen::VectorXd& f_nei,
                           const Eigen::VectorXd& q, const AttentionParams& p,
                           Activation act, SideTrace* t) {
  Eigen::VectorXd s_self = p.w_self.transpose() * f;
  Eigen::VectorXd h_nei = p.w_nei.transpose() * f_nei;
  const double rel_self = q.dot(s_self);
  const double rel_nei = q.dot(h_nei);
  const double hi = std::max(rel_self, rel_nei);
  const double es = std::exp(rel_self - hi);
  const double en = std::exp(rel_nei - hi);
  const double a_self = es / (es + en);
  const double a_nei = en / (es + en);
  Eigen::VectorXd z = a_self * s_self + a_nei * f_nei;
  Eigen::VectorXd f_out(z.size());
  for (Eigen::Index c = 0; c < z.size(); ++c)
    f_out[c] = apply_activation(act, z[c]);
  if (t) {
    t->q = q;
    t->s_self = std::move(s_self);
    t->f_nei = f_nei;
    t->h_nei = std::move(h_nei);
    t->rel_self = rel_self;
    t->rel_nei = rel_nei;
    t->a_self = a_self;
    t->a_nei = a_nei;
    t->z = std::move(z);
    t->f_out = f_out;
  }
  return f_out;
}

// One side of one edge: merge the neighborhoods, score and aggregate the
// neighbors, run the updater. "factors" is the factor matrix of the same
// side (neighbors are same-type nodes).
Eigen::VectorXd embed_side(const Eigen::VectorXd& f,
                           const Eigen::MatrixXd& factors,
                           const NeighborList& corating,
                           const NeighborList& target, int cap,
                           const AttentionParams& p, Activation act,
                           SideTrace* t) {
  NeighborList merged = merge_neighborhoods(corating, target, cap);
  if (merged.empty()) {
    // Cold entity: no neighborhood evidence at all, so the embedding is just
    // the projected factor vector.
    Eigen::VectorXd s_self = p.w_self.transpose() * f;
    Eigen::VectorXd f_out(s_self.size());
    for (Eigen::Index c = 0; c < s_self.size(); ++c)
      f_out[c] = apply_activation(act, s_self[c]);
    if (t) {
      t->cold = true;
      t->s_self = s_self;
      t->z = std::move(s_self);
      t->f_out = f_out;
      t->f_nei = Eigen::VectorXd::Zero(f_out.size());
    }
    return f_out;
  }

  const Eigen::VectorXd q = p.w_query.transpose() * f;
  const Eigen::MatrixXd& wk = p.key_matrix();
  const int K = static_cast<int>(merged.size());
  Eigen::MatrixXd keys(q.size(), K);
  std::vector<double> rels(static_cast<std::size_t>(K));
  for (int j = 0; j < K; ++j) {
    keys.col(j) = wk.transpose() * factors.row(merged[j].id).transpose();
    rels[static_cast<std::size_t>(j)] =
        merged[j].weight * q.dot(keys.col(j));
  }
  auto coefs = attention_coefs(rels);
  Eigen::VectorXd f_nei = aggregate(coefs, keys);
  if (t) {
    t->neighbor_ids.resize(merged.size());
    t->neighbor_wts.resize(merged.size());
    for (int j = 0; j < K; ++j) {
      t->neighbor_ids[static_cast<std::size_t>(j)] = merged[j].id;
      t->neighbor_wts[static_cast<std::size_t>(j)] = merged[j].weight;
    }
    t->keys = keys;
    t->rels = rels;
    t->coefs = coefs;
  }
  return run_update(f, f_nei, q, p, act, t);
}

}  // namespace

Eigen::VectorXd update(const Eigen::VectorXd& f, const Eigen::VectorXd& f_nei,
                       const Eigen::VectorXd& q, const AttentionParams& p,
                       Activation act) {
  return run_update(f, f_nei, q, p, act, nullptr);
}

Eigen::VectorXd embed_user_for_edge(int u, int i, const EdgeContext& ctx,
                                    SideTrace* trace) {
  const ModelState& s = ctx.state;
  if (u < 0 || u >= s.n_users()) throw Error("embed_user_for_edge: bad user");
  if (static_cast<std::size_t>(u) >= ctx.graphs.user_lists.size())
    throw Error("embed_user_for_edge: graph misses user row");
  const Eigen::VectorXd f = s.factors.fu.row(u).transpose();
  const NeighborList target =
      target_user_neighbors(ctx.R, u, i, ctx.graphs.cap);
  return embed_side(f, s.factors.fu, ctx.graphs.user_lists[u], target,
                    ctx.graphs.cap, s.user_attn, s.update_act, trace);
}

Eigen::VectorXd embed_item_for_edge(int u, int i, const EdgeContext& ctx,
                                    SideTrace* trace) {
  const ModelState& s = ctx.state;
  if (i < 0 || i >= s.n_items()) throw Error("embed_item_for_edge: bad item");
  if (static_cast<std::size_t>(i) >= ctx.graphs.item_lists.size())
    throw Error("embed_item_for_edge: graph misses item row");
  const Eigen::VectorXd f = s.factors.fi.row(i).transpose();
  const NeighborList target =
      target_item_neighbors(ctx.R, u, i, ctx.graphs.cap);
  return embed_side(f, s.factors.fi, ctx.graphs.item_lists[i], target,
                    ctx.graphs.cap, s.item_attn, s.update_act, trace);
}

double mlp_forward(const MlpParams& mlp, const Eigen::VectorXd& x,
                   MlpTrace* trace) {
  if (mlp.layers.empty()) throw Error("mlp_forward: empty predictor");
  Eigen::VectorXd h = x;
  const std::size_t L = mlp.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    const MlpLayer& layer = mlp.layers[l];
    if (h.size() != layer.weight.rows())
      throw Error("mlp_forward: layer " + std::to_string(l) +
                  " dimension mismatch");
    Eigen::VectorXd pre = layer.weight.transpose() * h + layer.bias;
    if (trace) {
      trace->inputs.push_back(h);
      trace->pre.push_back(pre);
    }
    if (l + 1 == L) {
      if (pre.size() != 1) throw Error("mlp_forward: output must be scalar");
      return pre[0];
    }
    h = pre.cwiseMax(0.0);
  }
  throw Error("mlp_forward: unreachable");
}

EdgePrediction predict_edge_raw(int u, int i, const EdgeContext& ctx) {
  SideTrace tu, ti;
  const Eigen::VectorXd eu = embed_user_for_edge(u, i, ctx, &tu);
  const Eigen::VectorXd ei = embed_item_for_edge(u, i, ctx, &ti);
  Eigen::VectorXd x(eu.size() + ei.size());
  x << eu, ei;
  EdgePrediction out;
  out.raw = mlp_forward(ctx.state.mlp, x);
  out.user_cold = tu.cold;
  out.item_cold = ti.cold;
  return out;
}

double clamp_rating(double raw, const ModelState& state) {
  return std::min(std::max(raw, state.rating_min), state.rating_max);
}

double predict_edge(int u, int i, const EdgeContext& ctx) {
  return clamp_rating(predict_edge_raw(u, i, ctx).raw, ctx.state);
}

}  // namespace garec
