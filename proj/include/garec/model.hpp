#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "garec/nmf.hpp"

namespace garec {

enum class Activation { Identity, Tanh, Relu };

Activation activation_from_string(const std::string& s);  // throws on unknown
std::string to_string(Activation a);
double apply_activation(Activation a, double x);
double activation_grad(Activation a, double x);  // derivative at pre-activation x

// Per-side attention parameters. w_query (d x d') produces both the query
// and, when w_key is empty, the keys; a non-empty w_key gives keys their own
// transform. w_self (d x d') projects the node's own vector, w_nei (d' x d')
// the aggregated neighbor vector, for the updater's two relevance scores.
struct AttentionParams {
  Eigen::MatrixXd w_query;
  Eigen::MatrixXd w_key;  // empty when query/key share one matrix
  Eigen::MatrixXd w_self;
  Eigen::MatrixXd w_nei;

  bool shared_qk() const { return w_key.size() == 0; }
  const Eigen::MatrixXd& key_matrix() const {
    return shared_qk() ? w_query : w_key;
  }
};

struct MlpLayer {
  Eigen::MatrixXd weight;  // in x out
  Eigen::VectorXd bias;    // out
};

// Input 2d' -> hidden h1 -> hidden h2 -> scalar; rectifier hidden
// activations, linear output.
struct MlpParams {
  std::vector<MlpLayer> layers;
};

struct ModelState {
  FactorPair factors;
  AttentionParams user_attn;
  AttentionParams item_attn;
  MlpParams mlp;
  Activation update_act = Activation::Tanh;
  double rating_min = 1.0;
  double rating_max = 5.0;

  int d() const { return factors.d; }
  int d_prime() const { return static_cast<int>(user_attn.w_query.cols()); }
  int n_users() const { return static_cast<int>(factors.fu.rows()); }
  int n_items() const { return static_cast<int>(factors.fi.rows()); }

  // Throws unless every tensor is dimension-consistent and finite.
  void validate() const;
};

struct ModelInit {
  int d_prime = 16;
  int mlp_h1 = 0;  // 0 -> d
  int mlp_h2 = 0;  // 0 -> max(1, d/2)
  bool shared_qk = true;
  Activation update_act = Activation::Tanh;
  std::uint64_t seed = 0;
};

// Seeded uniform init (symmetric fan-balanced range per tensor); factors are
// taken as given.
ModelState init_model(FactorPair factors, const ModelInit& init);

}  // namespace garec
