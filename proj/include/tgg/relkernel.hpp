#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tgg/protograph.hpp"
#include "tgg/rng.hpp"
#include "tgg/tensor.hpp"

namespace tgg {

/// Two-layer map from |h_v - h_u| to a non-negative scalar. The hidden layer
/// is ReLU; the final layer combines the hidden units through
/// softplus-transformed weights, so the output is non-negative by
/// construction and exactly zero for identical embeddings while the hidden
/// bias stays at its zero initialization.
struct EdgeLearner {
  Tensor hidden_weight;  // d_in x hidden
  Tensor hidden_bias;    // 1 x hidden, zero-initialized
  Tensor output_weight;  // hidden x 1, passed through softplus at use

  static EdgeLearner create(Eigen::Index input_dim, Eigen::Index hidden, Rng& rng);
  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& out) const;
};

/// Gaussian similarity of learned Manhattan-style distances:
/// A_vu = exp(-Phi(|h_v - h_u|) / (2 bandwidth^2)), symmetric by
/// construction, entries in (0,1], differentiable in h and the learner.
Tensor edge_features(const Tensor& h, const EdgeLearner& learner, double bandwidth);

/// Symmetrically normalized propagation operator D^-1/2 (A + I) D^-1/2.
Tensor normalized_propagation(const Tensor& a);

/// H_next = relu(D^-1/2 (A+I) D^-1/2 H W).
Tensor gcn_layer(const Tensor& h_prev, const Tensor& a, const Tensor& w);

/// Differentiable graph descriptor: iterate F <- rownorm(A + I) F from class
/// one-hots; concatenate the per-iteration column sums divided by n.
Tensor soft_wl_embedding(const Tensor& a, const Matrix& class_onehots, int iterations);

/// || swl(A) - swl(template) ||^2 against the class-graph template lifted to
/// instance granularity.
Tensor kernel_loss(const Tensor& a, const Matrix& lifted_template,
                   const Matrix& class_onehots, int iterations);

/// Instance-pair template: prototype weight of the two node classes,
/// same-class pairs get weight 1.
Matrix lift_prototype_subgraph(const PrototypeGraph& g,
                               const std::vector<int>& node_classes);

/// One-hot rows over the episode's class list.
Matrix class_onehots(const std::vector<int>& node_classes,
                     const std::vector<int>& episode_classes);

/// Edge learning plus stacked GCN refinement. The input-side learner builds
/// the adjacency the GCN stack propagates over; the output-side learner
/// rebuilds the final adjacency from the refined embeddings (this is the
/// graph the propagation and kernel regularizer consume). With the GCN
/// disabled the input adjacency is final and the output learner is absent.
struct RelationKernel {
  EdgeLearner edge_in;
  EdgeLearner edge_out;  // undefined tensors when gcn_enabled is false
  std::vector<Tensor> gcn_weights;
  bool gcn_enabled = true;
  double bandwidth = 1.0;
  int wl_iterations = 2;

  static RelationKernel create(Eigen::Index input_dim, const std::vector<int>& gcn_dims,
                               Eigen::Index edge_hidden, double bandwidth,
                               int wl_iterations, bool gcn_enabled, Rng& rng);

  /// Returns the refined embeddings and the final adjacency.
  std::pair<Tensor, Tensor> forward(const Tensor& h) const;

  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& out) const;
};

}  // namespace tgg
