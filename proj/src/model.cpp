#include "garec/model.hpp"

#include <algorithm>
#include <cmath>

#include "garec/error.hpp"
#include "garec/rng.hpp"

namespace garec {

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu" || s == "rectifier") return Activation::Relu;
  throw Error("unknown activation '" + s + "' (expected identity, tanh or relu)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  throw Error("corrupt activation value");
}

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
  }
  throw Error("corrupt activation value");
}

double activation_grad(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
  }
  throw Error("corrupt activation value");
}

namespace {

void check_attn(const AttentionParams& p, int d, int dp, const char* side) {
  auto bad = [&](const char* what) {
    throw Error(std::string("model state: ") + side + " " + what +
                " has inconsistent dimensions");
  };
  if (p.w_query.rows() != d || p.w_query.cols() != dp) bad("w_query");
  if (!p.shared_qk() && (p.w_key.rows() != d || p.w_key.cols() != dp))
    bad("w_key");
  if (p.w_self.rows() != d || p.w_self.cols() != dp) bad("w_self");
  if (p.w_nei.rows() != dp || p.w_nei.cols() != dp) bad("w_nei");
  if (!p.w_query.allFinite() || !p.w_key.allFinite() ||
      !p.w_self.allFinite() || !p.w_nei.allFinite())
    throw Error(std::string("model state: ") + side + " has non-finite entries");
}

}  // namespace

void ModelState::validate() const {
  const int dd = factors.d;
  if (dd < 1) throw Error("model state: d must be >= 1");
  if (factors.fu.cols() != dd || factors.fi.cols() != dd)
    throw Error("model state: factor width disagrees with d");
  if (factors.fu.rows() < 1 || factors.fi.rows() < 1)
    throw Error("model state: empty factor matrix");
  if (!factors.fu.allFinite() || !factors.fi.allFinite())
    throw Error("model state: non-finite factor entries");
  const int dp = d_prime();
  if (dp < 1) throw Error("model state: d' must be >= 1");
  check_attn(user_attn, dd, dp, "user side");
  check_attn(item_attn, dd, dp, "item side");
  if (user_attn.shared_qk() != item_attn.shared_qk())
    throw Error("model state: query/key sharing differs between sides");

  if (mlp.layers.empty()) throw Error("model state: empty predictor");
  Eigen::Index in = 2 * dp;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const MlpLayer& layer = mlp.layers[l];
    if (layer.weight.rows() != in)
      throw Error("model state: predictor layer " + std::to_string(l) +
                  " input dimension mismatch");
    if (layer.bias.size() != layer.weight.cols())
      throw Error("model state: predictor layer " + std::to_string(l) +
                  " bias dimension mismatch");
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      throw Error("model state: non-finite predictor entries");
    in = layer.weight.cols();
  }
  if (in != 1) throw Error("model state: predictor output must be scalar");
  if (!(rating_min < rating_max))
    throw Error("model state: rating bounds out of order");
}

namespace {

// Symmetric uniform init with a fan-balanced range, filled in row-major
// order so the draw sequence is layout-independent.
void fill_uniform(Eigen::MatrixXd& w, Rng& rng) {
  const double lim =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      w(r, c) = rng.uniform(-lim, lim);
}

AttentionParams init_attn(int d, int dp, bool shared_qk, Rng& rng) {
  AttentionParams p;
  p.w_query.resize(d, dp);
  fill_uniform(p.w_query, rng);
  if (!shared_qk) {
    p.w_key.resize(d, dp);
    fill_uniform(p.w_key, rng);
  }
  p.w_self.resize(d, dp);
  fill_uniform(p.w_self, rng);
  p.w_nei.resize(dp, dp);
  fill_uniform(p.w_nei, rng);
  return p;
}

}  // namespace

ModelState init_model(FactorPair factors, const ModelInit& init) {
  if (factors.d < 1) throw Error("init_model: factors carry no dimension");
  if (init.d_prime < 1) throw Error("init_model: d' must be >= 1");
  const int d = factors.d;
  const int dp = init.d_prime;
  const int h1 = init.mlp_h1 > 0 ? init.mlp_h1 : d;
  const int h2 = init.mlp_h2 > 0 ? init.mlp_h2 : std::max(1, d / 2);

  Rng rng(derive_seed(init.seed, /*tag=*/3));
  ModelState s;
  s.factors = std::move(factors);
  s.user_attn = init_attn(d, dp, init.shared_qk, rng);
  s.item_attn = init_attn(d, dp, init.shared_qk, rng);
  const int dims[4] = {2 * dp, h1, h2, 1};
  for (int l = 0; l < 3; ++l) {
    MlpLayer layer;
    layer.weight.resize(dims[l], dims[l + 1]);
    fill_uniform(layer.weight, rng);
    layer.bias = Eigen::VectorXd::Zero(dims[l + 1]);
    s.mlp.layers.push_back(std::move(layer));
  }
  s.update_act = init.update_act;
  s.validate();
  return s;
}

}  // namespace garec
