#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tgg/protograph.hpp"
#include "tgg/rng.hpp"
#include "tgg/tensor.hpp"

namespace tgg {

/// Per-node neighbor candidate sets over an episode's nodes (self excluded;
/// self-inclusion happens at sampling time).
using CandidateSets = std::vector<std::vector<int>>;

/// Candidate neighbors per node: the union of (a) its k_nn cosine-nearest
/// instances and (b) every instance whose class carries a positive prototype
/// weight with its class (pass an already-cropped graph), symmetrically
/// closed.
CandidateSets build_initial_instance_graph(const Matrix& features,
                                           const std::vector<int>& node_classes,
                                           const PrototypeGraph& g, int k_nn);

/// Sampled fixed-size neighbor lists per node and hop, plus the node->class
/// map the class-level attention reads.
struct EpisodeNeighborhood {
  std::vector<IndexMatrix> hops;  // each n x sample_size
  std::vector<int> node_classes;
  std::uint64_t seed = 0;
};

/// Uniform neighbor sampling: without replacement while the pool suffices,
/// with replacement once it does not. include_self adds each node to its own
/// pool (the self-candidate fallback); with it disabled an isolated node is a
/// connectivity error.
EpisodeNeighborhood sample_neighbors(const CandidateSets& candidates,
                                     const std::vector<int>& node_classes,
                                     const std::vector<int>& sizes,
                                     std::uint64_t seed, bool include_self = true);

/// Attention weights of one node over its sampled neighbors:
/// softmax_u(LeakyReLU(a . [z_v, z_u])). Plain-matrix mirror of the batched
/// training path, kept for oracle tests.
Vector instance_attention(const Vector& z_v, const Matrix& z_neighbors,
                          const Vector& attention, double slope = 0.2);

struct AggregateLayer {
  Tensor weight;     // 2*d_in x d_out over [h_v, neighbor summary]
  Tensor attention;  // 2*d_out x 1, split into source/neighbor halves
  Tensor bn_gamma;   // 1 x d_out
  Tensor bn_beta;    // 1 x d_out
  BatchNormState bn_state;
  Unary activation = Unary::Relu;
};

/// Multi-hop aggregation in the concatenated-self GraphSAGE form: the
/// neighbor summary is the average of a class-level head (prototype-graph
/// weights at instance granularity) and an instance-level head (learned
/// additive attention); each hop applies its weight to [h_v, summary], then
/// batch norm and activation.
struct AggregateNetwork {
  std::vector<AggregateLayer> layers;
  bool attention_enabled = true;  // false: both heads uniform (mean aggregator)
  double leaky_slope = 0.2;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  static AggregateNetwork create(Eigen::Index input_dim,
                                 const std::vector<int>& layer_dims, Rng& rng);

  Eigen::Index output_dim() const;
  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& out) const;
};

/// One aggregation hop over sampled neighbors.
Tensor aggregate_layer_forward(AggregateNetwork& net, std::size_t layer_index,
                               const Tensor& h_prev, const IndexMatrix& neighbors,
                               const PrototypeGraph& g,
                               const std::vector<int>& node_classes,
                               BatchNormMode mode);

/// Full stacked forward; network depth must match the neighborhood hop count.
Tensor aggnet_forward(AggregateNetwork& net, const Tensor& features,
                      const EpisodeNeighborhood& nb, const PrototypeGraph& g,
                      BatchNormMode mode);

}  // namespace tgg
