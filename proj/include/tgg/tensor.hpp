#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tgg/errors.hpp"

namespace tgg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using IndexMatrix = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

/// Dense double-precision matrix participating in a reverse-mode
/// differentiation graph. A Tensor is a cheap handle; copies alias the same
/// node. Values are immutable while a forward graph references them; leaves
/// are mutated only through set_value (optimizer) and zero_grad.
class Tensor {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until a backward pass reaches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates this node's gradient into its parents.
    std::function<void(const Matrix&)> backprop;
  };

  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor param(Matrix value);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  const Matrix& grad() const;
  bool has_grad() const { return node_ && node_->grad.size() > 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const;

  /// Leaf mutation between forward passes (optimizer step, checkpoint load).
  void set_value(Matrix value);
  void zero_grad();

  /// Reverse-mode sweep from a scalar loss. Each node of the graph is
  /// visited exactly once; gradients accumulate until zero_grad, so repeated
  /// backward calls add up.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_tensor(Matrix value, std::vector<Tensor> parents,
                            std::function<void(const Matrix&)> backprop);
};

/// Internal factory for ops: requires_grad is inherited from the parents.
Tensor make_tensor(Matrix value, std::vector<Tensor> parents,
                   std::function<void(const Matrix&)> backprop);

// ---------------------------------------------------------------------------
// Differentiable operations (value semantics, Eigen-style free functions).
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);

/// x [n x m] + row [1 x m] broadcast over rows.
Tensor add_rowvec(const Tensor& x, const Tensor& row);
/// Repeat a column vector [n x 1] across m columns.
Tensor tile_cols(const Tensor& col, Eigen::Index m);
/// Row-major reinterpretation to a new shape with the same element count.
Tensor reshape_rowmajor(const Tensor& x, Eigen::Index rows, Eigen::Index cols);
Tensor concat_cols(const Tensor& a, const Tensor& b);

enum class Unary { Relu, LeakyRelu, Tanh, Exp, Abs, Softplus };

/// Elementwise map with the matching subgradient (abs uses 0 at 0; the slope
/// argument applies to LeakyRelu only).
Tensor elementwise(const Tensor& x, Unary kind, double slope = 0.2);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor softplus(const Tensor& x);

/// Elementwise power; the base must stay strictly positive for non-integer
/// exponents (used with -1 and -1/2 on degree vectors).
Tensor pow_elem(const Tensor& x, double exponent);

Tensor sum(const Tensor& x);     // -> 1x1
Tensor rowsum(const Tensor& x);  // -> n x 1
Tensor colsum(const Tensor& x);  // -> 1 x m

/// Max-stabilized softmax per row. With a mask, true entries participate and
/// false entries are exactly 0 in the output; a row with no true entry is a
/// degenerate-row error.
Tensor rowwise_softmax(const Tensor& x);
Tensor rowwise_softmax(const Tensor& x, const BoolMatrix& valid);

/// Select rows of x (duplicates allowed); backward scatter-adds.
Tensor gather_rows(const Tensor& x, const std::vector<Eigen::Index>& idx);

/// out(v, s) = col(idx(v, s), 0) for a column vector col [n x 1].
Tensor neighbor_gather(const Tensor& col, const IndexMatrix& idx);

/// out(v, :) = sum_s alpha(v, s) * z(idx(v, s), :).
Tensor attention_aggregate(const Tensor& z, const IndexMatrix& idx,
                           const Tensor& alpha);

/// sum_i w_i * (logsumexp(logits_i) - logits_i[label_i]), numerically stable.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             const std::vector<double>& row_weight);

/// Solve M X = B by LU with partial pivoting; never forms an inverse.
/// Backward: dL/dB = M^-T G, dL/dM = -(M^-T G) X^T. Refuses systems whose
/// smallest pivot falls below 1e-12 * ||M||.
Tensor linear_solve(const Tensor& m, const Tensor& b);

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class BatchNormMode { Train, Eval };

struct BatchNormState {
  Matrix running_mean;  // 1 x d
  Matrix running_var;   // 1 x d
  void init(Eigen::Index d) {
    running_mean = Matrix::Zero(1, d);
    running_var = Matrix::Ones(1, d);
  }
  bool initialized() const { return running_mean.size() > 0; }
};

/// Train mode normalizes by batch statistics (biased variance), applies the
/// learned scale/shift and updates the running statistics in place (unbiased
/// variance, exponential update). Eval mode reads the running statistics and
/// leaves them untouched. Requires n >= 2 rows in train mode.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, BatchNormMode mode,
                  double epsilon = 1e-5, double momentum = 0.1);

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  /// One update over the given parameters using their accumulated grads.
  /// Moment buffers are keyed by node identity and created on first use.
  void step(const std::vector<Tensor>& params);

  long step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Slot {
    Matrix m, v;
  };
  AdamConfig config_;
  std::unordered_map<const Tensor::Node*, Slot> slots_;
  long step_ = 0;
};

void zero_grads(const std::vector<Tensor>& params);

}  // namespace tgg
