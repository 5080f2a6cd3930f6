#include "tgg/protograph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace tgg {

Eigen::Index PrototypeGraph::index_of(int class_id) const {
  for (std::size_t i = 0; i < class_ids.size(); ++i)
    if (class_ids[i] == class_id) return static_cast<Eigen::Index>(i);
  throw SchemaError("prototype graph: unknown class " + std::to_string(class_id));
}

double PrototypeGraph::weight_between(int class_a, int class_b) const {
  return weights(index_of(class_a), index_of(class_b));
}

Eigen::Index PrototypeGraph::edge_count() const {
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < weights.rows(); ++i)
    for (Eigen::Index j = i + 1; j < weights.cols(); ++j)
      if (weights(i, j) > 0.0) ++n;
  return n;
}

PrototypeGraph PrototypeGraph::from_edge_list(const std::string& path,
                                              std::vector<int> class_ids) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open edge list: " + path);

  std::unordered_map<int, Eigen::Index> index;
  for (std::size_t i = 0; i < class_ids.size(); ++i)
    index[class_ids[i]] = static_cast<Eigen::Index>(i);

  const Eigen::Index c = static_cast<Eigen::Index>(class_ids.size());
  Matrix w = Matrix::Zero(c, c);
  std::string line;
  int line_no = 0;
  int edges = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string a_str, b_str, w_str;
    if (!std::getline(is, a_str, '\t') || !std::getline(is, b_str, '\t') ||
        !std::getline(is, w_str, '\t'))
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected class_a<TAB>class_b<TAB>weight");
    int a, b;
    double weight;
    try {
      a = std::stoi(a_str);
      b = std::stoi(b_str);
      weight = std::stod(w_str);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed edge row");
    }
    auto ia = index.find(a), ib = index.find(b);
    if (ia == index.end() || ib == index.end())
      throw SchemaError(path + ":" + std::to_string(line_no) + ": unknown class " +
                        std::to_string(ia == index.end() ? a : b));
    if (weight < 0.0)
      throw ValueError(path + ":" + std::to_string(line_no) + ": negative weight " +
                       std::to_string(weight));
    if (ia->second == ib->second) continue;  // self-weights stay zero
    // duplicate rows and directed pairs: max weight wins
    const double v = std::max({w(ia->second, ib->second), weight});
    w(ia->second, ib->second) = v;
    w(ib->second, ia->second) = v;
    ++edges;
  }
  const double mx = w.maxCoeff();
  if (mx > 0.0) w /= mx;
  if (edges == 0)
    std::fprintf(stderr, "warning: edge list %s is empty; prototype graph has no edges\n",
                 path.c_str());
  return {std::move(class_ids), std::move(w)};
}

PrototypeGraph PrototypeGraph::from_attributes(const Matrix& attributes,
                                               std::vector<int> class_ids) {
  const Eigen::Index c = attributes.rows();
  if (static_cast<Eigen::Index>(class_ids.size()) != c)
    throw ShapeError("from_attributes: class id count does not match attribute rows");
  Vector norms(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    norms(i) = attributes.row(i).norm();
    if (norms(i) == 0.0)
      throw ValueError("from_attributes: class " +
                       std::to_string(class_ids[static_cast<std::size_t>(i)]) +
                       " has an all-zero attribute row");
  }
  Matrix w = Matrix::Zero(c, c);
  for (Eigen::Index i = 0; i < c; ++i)
    for (Eigen::Index j = i + 1; j < c; ++j) {
      const double s = attributes.row(i).cwiseProduct(attributes.row(j)).sum() /
                       (norms(i) * norms(j));
      const double clamped = std::min(1.0, std::max(0.0, s));
      w(i, j) = clamped;
      w(j, i) = clamped;
    }
  return {std::move(class_ids), std::move(w)};
}

PrototypeGraph crop(const PrototypeGraph& g, double threshold) {
  PrototypeGraph out = g;
  for (Eigen::Index i = 0; i < out.weights.rows(); ++i)
    for (Eigen::Index j = 0; j < out.weights.cols(); ++j)
      if (out.weights(i, j) < threshold) out.weights(i, j) = 0.0;
  return out;
}

Vector class_attention_row(const PrototypeGraph& g, int v_class,
                           const std::vector<int>& neighbor_classes) {
  if (neighbor_classes.empty())
    throw ValueError("class_attention_row: empty neighbor list");
  const Eigen::Index v = g.index_of(v_class);
  Vector scores(static_cast<Eigen::Index>(neighbor_classes.size()));
  for (std::size_t j = 0; j < neighbor_classes.size(); ++j)
    scores(static_cast<Eigen::Index>(j)) = g.weights(v, g.index_of(neighbor_classes[j]));
  // softmax; an all-zero score row comes out exactly uniform
  const double mx = scores.maxCoeff();
  Vector out = (scores.array() - mx).exp();
  out /= out.sum();
  return out;
}

void save_edge_list(const PrototypeGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  char buf[40];
  for (Eigen::Index i = 0; i < g.weights.rows(); ++i)
    for (Eigen::Index j = i + 1; j < g.weights.cols(); ++j)
      if (g.weights(i, j) > 0.0) {
        std::snprintf(buf, sizeof(buf), "%.17g", g.weights(i, j));
        out << g.class_ids[static_cast<std::size_t>(i)] << "\t"
            << g.class_ids[static_cast<std::size_t>(j)] << "\t" << buf << "\n";
      }
}

}  // namespace tgg
