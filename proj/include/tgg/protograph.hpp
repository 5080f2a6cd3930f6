#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "tgg/errors.hpp"
#include "tgg/tensor.hpp"

namespace tgg {

/// Class-level prototype graph: a dense symmetric weight matrix over all
/// classes (seen and unseen), entries in [0,1], zero diagonal. Immutable
/// after construction.
struct PrototypeGraph {
  std::vector<int> class_ids;
  Matrix weights;  // C x C

  /// Offline import of a TSV edge list `class_a<TAB>class_b<TAB>weight`.
  /// Directed duplicates are symmetrized by max; weights are max-normalized
  /// to [0,1]; the diagonal is forced to zero. An empty edge list yields the
  /// all-zeros graph (valid but degenerate).
  static PrototypeGraph from_edge_list(const std::string& path,
                                       std::vector<int> class_ids);

  /// Dense similarity graph from per-class attribute rows:
  /// s(i,j) = sum_k (a_i .* a_j)_k / (|a_i| |a_j|), clamped to [0,1].
  static PrototypeGraph from_attributes(const Matrix& attributes,
                                        std::vector<int> class_ids);

  Eigen::Index index_of(int class_id) const;
  double weight_between(int class_a, int class_b) const;
  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index edge_count() const;  // strictly positive off-diagonal pairs
};

/// Removes every edge whose weight is smaller than the threshold.
PrototypeGraph crop(const PrototypeGraph& g, double threshold);

/// Softmax-normalized prototype weights between v's class and each
/// neighbor's class. All-zero rows normalize to uniform attention.
Vector class_attention_row(const PrototypeGraph& g, int v_class,
                           const std::vector<int>& neighbor_classes);

void save_edge_list(const PrototypeGraph& g, const std::string& path);

}  // namespace tgg
