#include "tgg/propagate.hpp"

#include <cmath>

namespace tgg {

Matrix LabelMatrix::labeled_only() const {
  if (static_cast<Eigen::Index>(labeled.size()) != onehot.rows())
    throw ShapeError("LabelMatrix: mask length does not match rows");
  Matrix out = onehot;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    if (!labeled[static_cast<std::size_t>(i)]) out.row(i).setZero();
  return out;
}

Tensor propagate_closed_form(const Tensor& a, const Matrix& y_labeled, double mu) {
  if (!(mu > 0.0 && mu < 1.0))
    throw ConfigError("propagate: mu must lie in (0,1), got " + std::to_string(mu));
  const Eigen::Index n = a.rows();
  if (a.cols() != n || y_labeled.rows() != n)
    throw ShapeError("propagate: label matrix does not match adjacency");
  Tensor s = normalized_propagation(a);
  Tensor system = sub(Tensor::constant(Matrix::Identity(n, n)), scale(s, mu));
  return linear_solve(system, Tensor::constant(y_labeled));
}

Tensor dual_propagation_loss(const Tensor& a, const LabelMatrix& labels,
                             const std::vector<bool>& unseen_node, double mu) {
  if (!(mu > 0.0 && mu < 1.0))
    throw ConfigError("dual_propagation_loss: mu must lie in (0,1)");
  const Eigen::Index n = a.rows();
  if (labels.onehot.rows() != n ||
      static_cast<Eigen::Index>(unseen_node.size()) != n)
    throw ShapeError("dual_propagation_loss: shape mismatch");

  Matrix y_seen = Matrix::Zero(n, labels.onehot.cols());
  Matrix y_unseen = Matrix::Zero(n, labels.onehot.cols());
  int seen_count = 0, unseen_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!labels.labeled[static_cast<std::size_t>(i)]) continue;
    if (unseen_node[static_cast<std::size_t>(i)]) {
      y_unseen.row(i) = labels.onehot.row(i);
      ++unseen_count;
    } else {
      y_seen.row(i) = labels.onehot.row(i);
      ++seen_count;
    }
  }
  if (seen_count == 0 || unseen_count == 0)
    throw EpisodeError("dual_propagation_loss: needs labeled nodes from both domains");

  Tensor s = normalized_propagation(a);
  Tensor system = sub(Tensor::constant(Matrix::Identity(n, n)), scale(s, mu));
  // (I-muS)^-1 Y_S - (I-muS)^-1 Y_U = (I-muS)^-1 (Y_S - Y_U)
  Tensor diff = linear_solve(system, Tensor::constant(Matrix(y_seen - y_unseen)));
  return sum(hadamard(diff, diff));
}

Matrix predict(const Matrix& y_star, const std::vector<int>& query_rows,
               double temperature) {
  Matrix out(static_cast<Eigen::Index>(query_rows.size()), y_star.cols());
  for (std::size_t q = 0; q < query_rows.size(); ++q) {
    const int r = query_rows[q];
    if (r < 0 || r >= y_star.rows())
      throw ShapeError("predict: query row out of range");
    Eigen::RowVectorXd row = y_star.row(r) * temperature;
    const double mx = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - mx).exp();
    out.row(static_cast<Eigen::Index>(q)) = e / e.sum();
  }
  return out;
}

}  // namespace tgg
