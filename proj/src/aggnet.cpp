#include "tgg/aggnet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace tgg {

CandidateSets build_initial_instance_graph(const Matrix& features,
                                           const std::vector<int>& node_classes,
                                           const PrototypeGraph& g, int k_nn) {
  const Eigen::Index n = features.rows();
  if (n < 2)
    throw ShapeError("build_initial_instance_graph: need at least 2 nodes, got " +
                     std::to_string(n));
  if (static_cast<Eigen::Index>(node_classes.size()) != n)
    throw ShapeError("build_initial_instance_graph: class list does not match nodes");

  Vector norms(n);
  for (Eigen::Index i = 0; i < n; ++i) norms(i) = features.row(i).norm();

  std::vector<std::set<int>> cand(static_cast<std::size_t>(n));

  // (a) k_nn cosine-nearest instances
  for (Eigen::Index v = 0; v < n; ++v) {
    std::vector<std::pair<double, int>> sims;
    sims.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index u = 0; u < n; ++u) {
      if (u == v) continue;
      double s = 0.0;
      if (norms(v) > 0.0 && norms(u) > 0.0)
        s = features.row(v).dot(features.row(u)) / (norms(v) * norms(u));
      sims.push_back({s, static_cast<int>(u)});
    }
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, k_nn)),
                                                sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<long>(k), sims.end(),
                      [](const auto& a, const auto& b) {
                        return a.first > b.first ||
                               (a.first == b.first && a.second < b.second);
                      });
    for (std::size_t i = 0; i < k; ++i)
      cand[static_cast<std::size_t>(v)].insert(sims[i].second);
  }

  // (b) instances of positively-weighted prototype neighbors of v's class
  for (Eigen::Index v = 0; v < n; ++v) {
    const Eigen::Index cv = g.index_of(node_classes[static_cast<std::size_t>(v)]);
    for (Eigen::Index u = 0; u < n; ++u) {
      if (u == v) continue;
      const Eigen::Index cu = g.index_of(node_classes[static_cast<std::size_t>(u)]);
      if (g.weights(cv, cu) > 0.0) cand[static_cast<std::size_t>(v)].insert(static_cast<int>(u));
    }
  }

  // symmetric closure
  for (Eigen::Index v = 0; v < n; ++v)
    for (int u : cand[static_cast<std::size_t>(v)])
      cand[static_cast<std::size_t>(u)].insert(static_cast<int>(v));

  CandidateSets out(static_cast<std::size_t>(n));
  for (Eigen::Index v = 0; v < n; ++v)
    out[static_cast<std::size_t>(v)].assign(cand[static_cast<std::size_t>(v)].begin(),
                                            cand[static_cast<std::size_t>(v)].end());
  return out;
}

EpisodeNeighborhood sample_neighbors(const CandidateSets& candidates,
                                     const std::vector<int>& node_classes,
                                     const std::vector<int>& sizes,
                                     std::uint64_t seed, bool include_self) {
  const std::size_t n = candidates.size();
  if (node_classes.size() != n)
    throw ShapeError("sample_neighbors: class list does not match candidate sets");
  Rng rng(seed);
  EpisodeNeighborhood nb;
  nb.node_classes = node_classes;
  nb.seed = seed;
  for (int size : sizes) {
    if (size <= 0) throw ConfigError("sample_neighbors: sample size must be positive");
    IndexMatrix hop(static_cast<Eigen::Index>(n), size);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<int> pool = candidates[v];
      if (include_self) pool.push_back(static_cast<int>(v));
      if (pool.empty())
        throw ConnectivityError("sample_neighbors: node " + std::to_string(v) +
                                " has no neighbor candidates");
      if (pool.size() >= static_cast<std::size_t>(size)) {
        auto chosen = rng.sample_without_replacement(pool, static_cast<std::size_t>(size));
        for (int j = 0; j < size; ++j)
          hop(static_cast<Eigen::Index>(v), j) = chosen[static_cast<std::size_t>(j)];
      } else {
        for (int j = 0; j < size; ++j)
          hop(static_cast<Eigen::Index>(v), j) =
              pool[rng.uniform_index(pool.size())];
      }
    }
    nb.hops.push_back(std::move(hop));
  }
  return nb;
}

Vector instance_attention(const Vector& z_v, const Matrix& z_neighbors,
                          const Vector& attention, double slope) {
  const Eigen::Index s = z_neighbors.rows(), d = z_neighbors.cols();
  if (s < 1) throw ValueError("instance_attention: need at least one neighbor");
  if (attention.size() != 2 * d)
    throw ShapeError("instance_attention: attention vector must have length 2*d");
  Vector scores(s);
  const Vector a_src = attention.head(d);
  const Vector a_dst = attention.tail(d);
  const double src = z_v.dot(a_src);
  for (Eigen::Index j = 0; j < s; ++j) {
    const double e = src + z_neighbors.row(j).dot(a_dst);
    scores(j) = e > 0.0 ? e : slope * e;
  }
  const double mx = scores.maxCoeff();
  Vector w = (scores.array() - mx).exp();
  w /= w.sum();
  return w;
}

AggregateNetwork AggregateNetwork::create(Eigen::Index input_dim,
                                          const std::vector<int>& layer_dims,
                                          Rng& rng) {
  AggregateNetwork net;
  Eigen::Index d_in = input_dim;
  for (int dim : layer_dims) {
    AggregateLayer layer;
    // weight consumes [h_v, aggregated neighbors]: rows 0..d_in-1 transform
    // the node itself, rows d_in..2*d_in-1 the neighbor summary
    const double bound = std::sqrt(2.0 / static_cast<double>(2 * d_in));
    layer.weight = Tensor::param(rng.normal_matrix(2 * d_in, dim) * bound);
    layer.attention = Tensor::param(rng.normal_matrix(2 * dim, 1) * 0.1);
    layer.bn_gamma = Tensor::param(Matrix::Ones(1, dim));
    layer.bn_beta = Tensor::param(Matrix::Zero(1, dim));
    layer.bn_state.init(dim);
    net.layers.push_back(std::move(layer));
    d_in = dim;
  }
  return net;
}

Eigen::Index AggregateNetwork::output_dim() const {
  if (layers.empty()) throw ConfigError("aggregate network has no layers");
  return layers.back().weight.cols();
}

void AggregateNetwork::collect_params(
    const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + "layer" + std::to_string(i) + ".";
    out.emplace_back(base + "weight", layers[i].weight);
    out.emplace_back(base + "attention", layers[i].attention);
    out.emplace_back(base + "bn_gamma", layers[i].bn_gamma);
    out.emplace_back(base + "bn_beta", layers[i].bn_beta);
  }
}

Tensor aggregate_layer_forward(AggregateNetwork& net, std::size_t layer_index,
                               const Tensor& h_prev, const IndexMatrix& neighbors,
                               const PrototypeGraph& g,
                               const std::vector<int>& node_classes,
                               BatchNormMode mode) {
  AggregateLayer& layer = net.layers.at(layer_index);
  const Eigen::Index n = h_prev.rows();
  const Eigen::Index s = neighbors.cols();
  const Eigen::Index d_in = h_prev.cols();
  const Eigen::Index d_out = layer.weight.cols();
  if (neighbors.rows() != n)
    throw ShapeError("aggregate_layer_forward: neighbor lists do not match nodes");
  if (layer.weight.rows() != 2 * d_in)
    throw ShapeError("aggregate_layer_forward: layer expects input dimension " +
                     std::to_string(layer.weight.rows() / 2) + ", got " +
                     std::to_string(d_in));

  std::vector<Eigen::Index> self_rows, nbr_rows;
  for (Eigen::Index i = 0; i < d_in; ++i) self_rows.push_back(i);
  for (Eigen::Index i = d_in; i < 2 * d_in; ++i) nbr_rows.push_back(i);
  Tensor w_self = gather_rows(layer.weight, self_rows);
  Tensor w_nbr = gather_rows(layer.weight, nbr_rows);
  Tensor z = matmul(h_prev, w_nbr);  // n x d_out, scores and neighbor summary

  // class-level head: prototype weights at instance granularity (same-class
  // pairs carry the maximal weight 1, as in the kernel-template lifting),
  // softmax-normalized per neighborhood; the attention ablation turns both
  // heads into plain means
  Matrix alpha_class = Matrix::Constant(n, s, 1.0 / double(s));
  if (net.attention_enabled) {
    for (Eigen::Index v = 0; v < n; ++v) {
      const Eigen::Index cv =
          g.index_of(node_classes[static_cast<std::size_t>(v)]);
      Vector scores(s);
      for (Eigen::Index j = 0; j < s; ++j) {
        const Eigen::Index cu =
            g.index_of(node_classes[static_cast<std::size_t>(neighbors(v, j))]);
        scores(j) = cv == cu ? 1.0 : g.weights(cv, cu);
      }
      const Eigen::ArrayXd e = (scores.array() - scores.maxCoeff()).exp();
      alpha_class.row(v) = (e / e.sum()).matrix().transpose();
    }
  }

  Tensor head_class = attention_aggregate(z, neighbors, Tensor::constant(alpha_class));

  Tensor head_instance;
  if (net.attention_enabled) {
    // e_vu = LeakyReLU(a . [z_v, z_u]) via the split halves of the vector
    std::vector<Eigen::Index> src_rows, dst_rows;
    for (Eigen::Index i = 0; i < d_out; ++i) src_rows.push_back(i);
    for (Eigen::Index i = d_out; i < 2 * d_out; ++i) dst_rows.push_back(i);
    Tensor a_src = gather_rows(layer.attention, src_rows);  // d_out x 1
    Tensor a_dst = gather_rows(layer.attention, dst_rows);
    Tensor s_src = matmul(z, a_src);  // n x 1
    Tensor s_dst = matmul(z, a_dst);
    Tensor scores = leaky_relu(add(tile_cols(s_src, s), neighbor_gather(s_dst, neighbors)),
                               net.leaky_slope);
    head_instance = attention_aggregate(z, neighbors, rowwise_softmax(scores));
  } else {
    head_instance = attention_aggregate(
        z, neighbors, Tensor::constant(Matrix::Constant(n, s, 1.0 / double(s))));
  }

  Tensor neighborhood = scale(add(head_class, head_instance), 0.5);  // 1/|a|, |a| = 2
  // concatenated-self update: out = act(BN(W_self h_v + W_nbr neighborhood))
  Tensor combined = add(matmul(h_prev, w_self), neighborhood);
  Tensor normed = batch_norm(combined, layer.bn_gamma, layer.bn_beta, layer.bn_state,
                             mode, net.bn_epsilon, net.bn_momentum);
  return elementwise(normed, layer.activation, net.leaky_slope);
}

Tensor aggnet_forward(AggregateNetwork& net, const Tensor& features,
                      const EpisodeNeighborhood& nb, const PrototypeGraph& g,
                      BatchNormMode mode) {
  if (nb.hops.size() != net.layers.size())
    throw ShapeError("aggnet_forward: network depth " + std::to_string(net.layers.size()) +
                     " does not match neighborhood hop count " +
                     std::to_string(nb.hops.size()));
  Tensor h = features;
  for (std::size_t k = 0; k < net.layers.size(); ++k)
    h = aggregate_layer_forward(net, k, h, nb.hops[k], g, nb.node_classes, mode);
  return h;
}

}  // namespace tgg
