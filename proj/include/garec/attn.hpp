#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "garec/graph.hpp"
#include "garec/model.hpp"

namespace garec {

// Everything a forward pass needs to score edges. State is read-only here;
// any number of edges may be embedded concurrently.
struct EdgeContext {
  const ModelState& state;
  const CoRatingGraph& graphs;
  const SparseRatings& R;
};

// f . W (query when f is the target node, key when f is a neighbor).
Eigen::VectorXd transform(const Eigen::VectorXd& f, const Eigen::MatrixXd& W);

// a * (q . k); may be negative.
double relevance(const Eigen::VectorXd& q, const Eigen::VectorXd& k, double a);

// ReLU pruning (drop rel <= 0), mean threshold over survivors (drop strictly
// below the mean), softmax over the remainder. Returns (input index,
// coefficient) pairs summing to 1, or an empty list when nothing survives.
std::vector<std::pair<int, double>> attention_coefs(
    const std::vector<double>& rels);

// sum of coef * keys.col(index); empty coefs give the zero vector.
Eigen::VectorXd aggregate(const std::vector<std::pair<int, double>>& coefs,
                          const Eigen::MatrixXd& keys);

// The updater: rel_self = q.(f w_self), rel_nei = q.(f_nei w_nei), a 2-way
// softmax of the two scores, then act(a_self*(f w_self) + a_nei*f_nei).
Eigen::VectorXd update(const Eigen::VectorXd& f, const Eigen::VectorXd& f_nei,
                       const Eigen::VectorXd& q, const AttentionParams& p,
                       Activation act);

// Forward intermediates for one side of one edge, kept for the backward pass.
struct SideTrace {
  std::vector<int> neighbor_ids;      // merged neighborhood (possibly empty)
  std::vector<double> neighbor_wts;   // merged a-weights, same order
  Eigen::MatrixXd keys;               // d' x K, column j is k of neighbor j
  std::vector<double> rels;
  std::vector<std::pair<int, double>> coefs;  // surviving (index, coef)
  Eigen::VectorXd q;
  Eigen::VectorXd s_self;  // f . w_self
  Eigen::VectorXd f_nei;
  Eigen::VectorXd h_nei;   // f_nei . w_nei
  Eigen::VectorXd z;       // pre-activation of the output
  Eigen::VectorXd f_out;
  double rel_self = 0.0;
  double rel_nei = 0.0;
  double a_self = 0.0;
  double a_nei = 0.0;
  bool cold = false;  // empty merged neighborhood -> f_out = act(s_self)
};

// Builds the merged neighborhood for edge (u,i), runs the aggregator and
// updater on the chosen side. The target rating r_ui never enters: u is
// excluded from i's rater list and i from u's item list.
Eigen::VectorXd embed_user_for_edge(int u, int i, const EdgeContext& ctx,
                                    SideTrace* trace = nullptr);
Eigen::VectorXd embed_item_for_edge(int u, int i, const EdgeContext& ctx,
                                    SideTrace* trace = nullptr);

struct MlpTrace {
  std::vector<Eigen::VectorXd> inputs;  // activation entering each layer
  std::vector<Eigen::VectorXd> pre;     // pre-activation of each layer
};

double mlp_forward(const MlpParams& mlp, const Eigen::VectorXd& x,
                   MlpTrace* trace = nullptr);

struct EdgePrediction {
  double raw = 0.0;  // unclamped MLP output (training-time value)
  bool user_cold = false;
  bool item_cold = false;
};

EdgePrediction predict_edge_raw(int u, int i, const EdgeContext& ctx);

double clamp_rating(double raw, const ModelState& state);

// Evaluation-time prediction: raw output clamped to the rating bounds.
double predict_edge(int u, int i, const EdgeContext& ctx);

}  // namespace garec
