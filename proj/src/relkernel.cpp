#include "tgg/relkernel.hpp"

#include <algorithm>
#include <cmath>

namespace tgg {

EdgeLearner EdgeLearner::create(Eigen::Index input_dim, Eigen::Index hidden, Rng& rng) {
  EdgeLearner e;
  // non-negative first-layer weights make Phi a weighted Manhattan distance
  // at initialization, so the adjacency starts with genuine locality instead
  // of a random projection of it
  e.hidden_weight = Tensor::param(rng.normal_matrix(input_dim, hidden).cwiseAbs() /
                                  static_cast<double>(input_dim));
  e.hidden_bias = Tensor::param(Matrix::Zero(1, hidden));
  const double out = std::log(std::exp(2.0 / static_cast<double>(hidden)) - 1.0);
  e.output_weight = Tensor::param(Matrix::Constant(hidden, 1, out) +
                                  0.01 * rng.normal_matrix(hidden, 1));
  return e;
}

void EdgeLearner::collect_params(const std::string& prefix,
                                 std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + "hidden_weight", hidden_weight);
  out.emplace_back(prefix + "hidden_bias", hidden_bias);
  out.emplace_back(prefix + "output_weight", output_weight);
}

Tensor edge_features(const Tensor& h, const EdgeLearner& learner, double bandwidth) {
  const Eigen::Index n = h.rows();
  if (n < 2) throw ShapeError("edge_features: need at least 2 nodes");
  if (bandwidth <= 0.0) throw ConfigError("edge_features: bandwidth must be positive");

  std::vector<Eigen::Index> iv, iu;
  iv.reserve(static_cast<std::size_t>(n * n));
  iu.reserve(static_cast<std::size_t>(n * n));
  for (Eigen::Index v = 0; v < n; ++v)
    for (Eigen::Index u = 0; u < n; ++u) {
      iv.push_back(v);
      iu.push_back(u);
    }
  Tensor diff = tgg::abs(sub(gather_rows(h, iv), gather_rows(h, iu)));  // n^2 x d
  Tensor hidden = relu(add_rowvec(matmul(diff, learner.hidden_weight),
                                  learner.hidden_bias));
  Tensor phi = matmul(hidden, softplus(learner.output_weight));  // n^2 x 1, >= 0
  Tensor flat = tgg::exp(scale(phi, -1.0 / (2.0 * bandwidth * bandwidth)));
  return reshape_rowmajor(flat, n, n);
}

Tensor normalized_propagation(const Tensor& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw ShapeError("normalized_propagation: A must be square");
  Tensor with_self = add(a, Tensor::constant(Matrix::Identity(n, n)));
  Tensor d_inv_sqrt = pow_elem(rowsum(with_self), -0.5);  // degrees >= 1
  return hadamard(with_self, matmul(d_inv_sqrt, transpose(d_inv_sqrt)));
}

Tensor gcn_layer(const Tensor& h_prev, const Tensor& a, const Tensor& w) {
  if (a.rows() != h_prev.rows())
    throw ShapeError("gcn_layer: adjacency does not match node count");
  return relu(matmul(matmul(normalized_propagation(a), h_prev), w));
}

Tensor soft_wl_embedding(const Tensor& a, const Matrix& class_onehots, int iterations) {
  if (iterations < 1) throw ConfigError("soft_wl_embedding: iterations must be >= 1");
  const Eigen::Index n = a.rows();
  if (a.cols() != n || class_onehots.rows() != n)
    throw ShapeError("soft_wl_embedding: shape mismatch");
  Tensor with_self = add(a, Tensor::constant(Matrix::Identity(n, n)));
  Tensor rownorm = hadamard(with_self, tile_cols(pow_elem(rowsum(with_self), -1.0), n));
  Tensor f = Tensor::constant(class_onehots);
  Tensor descriptor;
  for (int r = 0; r < iterations; ++r) {
    f = matmul(rownorm, f);
    Tensor level = scale(colsum(f), 1.0 / static_cast<double>(n));
    descriptor = r == 0 ? level : concat_cols(descriptor, level);
  }
  return descriptor;
}

Tensor kernel_loss(const Tensor& a, const Matrix& lifted_template,
                   const Matrix& class_onehots, int iterations) {
  if (lifted_template.rows() != a.rows() || lifted_template.cols() != a.cols())
    throw ShapeError("kernel_loss: template shape does not match adjacency");
  Tensor d_gen = soft_wl_embedding(a, class_onehots, iterations);
  Tensor d_ref = soft_wl_embedding(Tensor::constant(lifted_template), class_onehots,
                                   iterations);
  Tensor diff = sub(d_gen, d_ref);
  return sum(hadamard(diff, diff));
}

Matrix lift_prototype_subgraph(const PrototypeGraph& g,
                               const std::vector<int>& node_classes) {
  const Eigen::Index n = static_cast<Eigen::Index>(node_classes.size());
  Matrix out(n, n);
  std::vector<Eigen::Index> cls(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    cls[static_cast<std::size_t>(i)] = g.index_of(node_classes[static_cast<std::size_t>(i)]);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = cls[static_cast<std::size_t>(i)] == cls[static_cast<std::size_t>(j)]
                      ? 1.0
                      : g.weights(cls[static_cast<std::size_t>(i)],
                                  cls[static_cast<std::size_t>(j)]);
  return out;
}

Matrix class_onehots(const std::vector<int>& node_classes,
                     const std::vector<int>& episode_classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(node_classes.size()),
                            static_cast<Eigen::Index>(episode_classes.size()));
  for (std::size_t i = 0; i < node_classes.size(); ++i) {
    auto it = std::find(episode_classes.begin(), episode_classes.end(), node_classes[i]);
    if (it == episode_classes.end())
      throw SchemaError("class_onehots: node class " + std::to_string(node_classes[i]) +
                        " is not an episode class");
    out(static_cast<Eigen::Index>(i),
        static_cast<Eigen::Index>(it - episode_classes.begin())) = 1.0;
  }
  return out;
}

RelationKernel RelationKernel::create(Eigen::Index input_dim,
                                      const std::vector<int>& gcn_dims,
                                      Eigen::Index edge_hidden, double bandwidth,
                                      int wl_iterations, bool gcn_enabled, Rng& rng) {
  RelationKernel k;
  k.bandwidth = bandwidth;
  k.wl_iterations = wl_iterations;
  k.gcn_enabled = gcn_enabled && !gcn_dims.empty();
  k.edge_in = EdgeLearner::create(input_dim, edge_hidden, rng);
  if (k.gcn_enabled) {
    Eigen::Index d = input_dim;
    for (int dim : gcn_dims) {
      const double bound = std::sqrt(2.0 / static_cast<double>(d));
      k.gcn_weights.push_back(Tensor::param(rng.normal_matrix(d, dim) * bound));
      d = dim;
    }
    k.edge_out = EdgeLearner::create(d, edge_hidden, rng);
  }
  return k;
}

std::pair<Tensor, Tensor> RelationKernel::forward(const Tensor& h) const {
  Tensor a = edge_features(h, edge_in, bandwidth);
  if (!gcn_enabled) return {h, a};
  Tensor refined = h;
  for (const Tensor& w : gcn_weights) refined = gcn_layer(refined, a, w);
  return {refined, edge_features(refined, edge_out, bandwidth)};
}

void RelationKernel::collect_params(const std::string& prefix,
                                    std::vector<std::pair<std::string, Tensor>>& out) const {
  edge_in.collect_params(prefix + "edge_in.", out);
  if (gcn_enabled) {
    for (std::size_t i = 0; i < gcn_weights.size(); ++i)
      out.emplace_back(prefix + "gcn" + std::to_string(i) + ".weight", gcn_weights[i]);
    edge_out.collect_params(prefix + "edge_out.", out);
  }
}

}  // namespace tgg
