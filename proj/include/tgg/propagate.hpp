#pragma once

#include <vector>

#include "tgg/relkernel.hpp"
#include "tgg/tensor.hpp"

namespace tgg {

/// One-hot labels per node plus the mask of rows that count as labeled.
/// Rows outside the mask are zeroed before propagation.
struct LabelMatrix {
  Matrix onehot;              // n x C, ground truth everywhere
  std::vector<bool> labeled;  // support mask

  Matrix labeled_only() const;
};

/// Closed-form label propagation Y* = (I - mu S)^-1 Y over the generated
/// adjacency, S = D^-1/2 (A+I) D^-1/2. Nonsingular for mu in (0,1) since the
/// spectral radius of S is at most 1. Differentiable in A.
Tensor propagate_closed_form(const Tensor& a, const Matrix& y_labeled, double mu);

/// Consistency between propagation seeded from seen-labeled rows only and
/// from unseen-labeled rows only: ||(I-muS)^-1 Y_S - (I-muS)^-1 Y_U||_F^2.
Tensor dual_propagation_loss(const Tensor& a, const LabelMatrix& labels,
                             const std::vector<bool>& unseen_node, double mu);

/// Softmax class probabilities of the selected propagated rows (Y* values
/// scaled by temperature).
Matrix predict(const Matrix& y_star, const std::vector<int>& query_rows,
               double temperature = 1.0);

}  // namespace tgg
