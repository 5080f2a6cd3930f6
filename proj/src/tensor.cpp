#include "tgg/tensor.hpp"

#include <Eigen/LU>

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace tgg {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

// Accumulates g into the node's grad buffer, sizing it on first touch.
void accum(const std::shared_ptr<Tensor::Node>& n, const Matrix& g) {
  if (!n->requires_grad) return;
  if (n->grad.size() == 0) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  n->grad += g;
}

}  // namespace

Tensor make_tensor(Matrix value, std::vector<Tensor> parents,
                   std::function<void(const Matrix&)> backprop) {
  auto node = std::make_shared<Tensor::Node>();
  node->value = std::move(value);
  node->backprop = std::move(backprop);
  node->parents.reserve(parents.size());
  for (const auto& p : parents) {
    node->parents.push_back(p.node());
    node->requires_grad = node->requires_grad || p.requires_grad();
  }
  struct Access : Tensor {
    explicit Access(std::shared_ptr<Node> n) : Tensor(std::move(n)) {}
  };
  return Access(std::move(node));
}

Tensor Tensor::constant(Matrix value) {
  return make_tensor(std::move(value), {}, nullptr);
}

Tensor Tensor::param(Matrix value) {
  Tensor t = make_tensor(std::move(value), {}, nullptr);
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return requires_grad ? param(std::move(m)) : constant(std::move(m));
}

const Matrix& Tensor::value() const {
  if (!node_) throw Error("tensor is undefined");
  return node_->value;
}

const Matrix& Tensor::grad() const {
  if (!node_) throw Error("tensor is undefined");
  if (node_->grad.size() == 0)
    throw Error("gradient not populated; run backward first");
  return node_->grad;
}

double Tensor::item() const {
  if (value().size() != 1)
    throw ShapeError("item() requires a 1x1 tensor, got " + shape_str(value()));
  return value()(0, 0);
}

void Tensor::set_value(Matrix value) {
  if (!node_) throw Error("tensor is undefined");
  if (value.rows() != node_->value.rows() || value.cols() != node_->value.cols())
    throw ShapeError("set_value shape " + shape_str(value) + " does not match " +
                     shape_str(node_->value));
  node_->value = std::move(value);
}

void Tensor::zero_grad() {
  if (!node_) throw Error("tensor is undefined");
  node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

void Tensor::backward() const {
  if (!node_) throw Error("backward on undefined tensor");
  if (node_->value.size() != 1)
    throw ShapeError("backward requires a scalar loss, got " + shape_str(node_->value));

  // Iterative post-order DFS over parent links; reversing the post-order
  // yields a topological order from the loss toward the leaves, so every
  // node's gradient is complete before its backprop runs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  accum(node_, Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->requires_grad) continue;
    if (n->grad.size() == 0)  // reachable but received no contribution
      n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
    if (n->backprop) n->backprop(n->grad);
  }
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.value()) + " vs " + shape_str(b.value()));
  auto an = a.node();
  auto bn = b.node();
  Matrix av = a.value();
  Matrix bv = b.value();
  return make_tensor(av * bv, {a, b}, [an, bn, av, bv](const Matrix& g) {
    accum(an, g * bv.transpose());
    accum(bn, av.transpose() * g);
  });
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a.value()) +
                     " vs " + shape_str(b.value()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto an = a.node();
  auto bn = b.node();
  return make_tensor(a.value() + b.value(), {a, b}, [an, bn](const Matrix& g) {
    accum(an, g);
    accum(bn, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto an = a.node();
  auto bn = b.node();
  return make_tensor(a.value() - b.value(), {a, b}, [an, bn](const Matrix& g) {
    accum(an, g);
    accum(bn, -g);
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  auto an = a.node();
  auto bn = b.node();
  Matrix av = a.value();
  Matrix bv = b.value();
  return make_tensor(av.cwiseProduct(bv), {a, b}, [an, bn, av, bv](const Matrix& g) {
    accum(an, g.cwiseProduct(bv));
    accum(bn, g.cwiseProduct(av));
  });
}

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  return make_tensor(a.value() * s, {a}, [an, s](const Matrix& g) {
    accum(an, g * s);
  });
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  return make_tensor(a.value().transpose(), {a}, [an](const Matrix& g) {
    accum(an, g.transpose());
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    throw ShapeError("add_rowvec: expected 1x" + std::to_string(x.cols()) +
                     ", got " + shape_str(row.value()));
  auto xn = x.node();
  auto rn = row.node();
  return make_tensor(x.value().rowwise() + row.value().row(0), {x, row},
                     [xn, rn](const Matrix& g) {
                       accum(xn, g);
                       accum(rn, g.colwise().sum());
                     });
}

Tensor tile_cols(const Tensor& col, Eigen::Index m) {
  if (col.cols() != 1)
    throw ShapeError("tile_cols: expected a column vector, got " + shape_str(col.value()));
  auto cn = col.node();
  return make_tensor(col.value().replicate(1, m), {col}, [cn](const Matrix& g) {
    accum(cn, g.rowwise().sum());
  });
}

Tensor reshape_rowmajor(const Tensor& x, Eigen::Index rows, Eigen::Index cols) {
  if (x.rows() * x.cols() != rows * cols)
    throw ShapeError("reshape_rowmajor: element count mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm = x.value();
  rm.resize(rows, cols);
  Eigen::Index xr = x.rows(), xc = x.cols();
  auto xn = x.node();
  return make_tensor(Matrix(rm), {x}, [xn, xr, xc](const Matrix& g) {
    RowMajor grm = g;
    grm.resize(xr, xc);
    accum(xn, Matrix(grm));
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: row counts differ, " + shape_str(a.value()) +
                     " vs " + shape_str(b.value()));
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  auto an = a.node();
  auto bn = b.node();
  Eigen::Index ac = a.cols(), bc = b.cols();
  return make_tensor(std::move(out), {a, b}, [an, bn, ac, bc](const Matrix& g) {
    accum(an, g.leftCols(ac));
    accum(bn, g.rightCols(bc));
  });
}

Tensor elementwise(const Tensor& x, Unary kind, double slope) {
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  Matrix dv(v.rows(), v.cols());  // local derivative captured for backward
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double t = v.data()[i];
    double y = 0.0, d = 0.0;
    switch (kind) {
      case Unary::Relu:
        y = t > 0.0 ? t : 0.0;
        d = t > 0.0 ? 1.0 : 0.0;
        break;
      case Unary::LeakyRelu:
        y = t > 0.0 ? t : slope * t;
        d = t > 0.0 ? 1.0 : slope;
        break;
      case Unary::Tanh:
        y = std::tanh(t);
        d = 1.0 - y * y;
        break;
      case Unary::Exp:
        y = std::exp(t);
        d = y;
        break;
      case Unary::Abs:
        y = std::abs(t);
        d = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
        break;
      case Unary::Softplus:
        // log(1 + e^t) without overflow
        y = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
        d = 1.0 / (1.0 + std::exp(-t));
        break;
    }
    out.data()[i] = y;
    dv.data()[i] = d;
  }
  auto xn = x.node();
  return make_tensor(std::move(out), {x}, [xn, dv](const Matrix& g) {
    accum(xn, g.cwiseProduct(dv));
  });
}

Tensor relu(const Tensor& x) { return elementwise(x, Unary::Relu); }
Tensor leaky_relu(const Tensor& x, double slope) {
  return elementwise(x, Unary::LeakyRelu, slope);
}
Tensor tanh(const Tensor& x) { return elementwise(x, Unary::Tanh); }
Tensor exp(const Tensor& x) { return elementwise(x, Unary::Exp); }
Tensor abs(const Tensor& x) { return elementwise(x, Unary::Abs); }
Tensor softplus(const Tensor& x) { return elementwise(x, Unary::Softplus); }

Tensor pow_elem(const Tensor& x, double exponent) {
  const Matrix& v = x.value();
  Matrix out = v.array().pow(exponent);
  Matrix dv = exponent * v.array().pow(exponent - 1.0);
  auto xn = x.node();
  return make_tensor(std::move(out), {x}, [xn, dv](const Matrix& g) {
    accum(xn, g.cwiseProduct(dv));
  });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  Eigen::Index r = x.rows(), c = x.cols();
  auto xn = x.node();
  return make_tensor(std::move(out), {x}, [xn, r, c](const Matrix& g) {
    accum(xn, Matrix::Constant(r, c, g(0, 0)));
  });
}

Tensor rowsum(const Tensor& x) {
  Matrix out = x.value().rowwise().sum();
  Eigen::Index c = x.cols();
  auto xn = x.node();
  return make_tensor(std::move(out), {x}, [xn, c](const Matrix& g) {
    accum(xn, g.replicate(1, c));
  });
}

Tensor colsum(const Tensor& x) {
  Matrix out = x.value().colwise().sum();
  Eigen::Index r = x.rows();
  auto xn = x.node();
  return make_tensor(std::move(out), {x}, [xn, r](const Matrix& g) {
    accum(xn, g.replicate(r, 1));
  });
}

namespace {

Tensor rowwise_softmax_impl(const Tensor& x, const BoolMatrix* valid) {
  const Matrix& v = x.value();
  if (valid && (valid->rows() != v.rows() || valid->cols() != v.cols()))
    throw ShapeError("rowwise_softmax: mask shape mismatch");
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      if (!valid || (*valid)(i, j)) mx = std::max(mx, v(i, j));
    if (!std::isfinite(mx))
      throw ValueError("rowwise_softmax: row " + std::to_string(i) +
                       " is fully masked");
    double denom = 0.0;
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (!valid || (*valid)(i, j)) {
        out(i, j) = std::exp(v(i, j) - mx);
        denom += out(i, j);
      }
    }
    out.row(i) /= denom;
  }
  auto xn = x.node();
  Matrix y = out;
  return make_tensor(std::move(out), {x}, [xn, y](const Matrix& g) {
    // dx_ij = y_ij * (g_ij - sum_k g_ik y_ik); masked entries have y = 0
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      dx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
    accum(xn, dx);
  });
}

}  // namespace

Tensor rowwise_softmax(const Tensor& x) { return rowwise_softmax_impl(x, nullptr); }

Tensor rowwise_softmax(const Tensor& x, const BoolMatrix& valid) {
  return rowwise_softmax_impl(x, &valid);
}

Tensor gather_rows(const Tensor& x, const std::vector<Eigen::Index>& idx) {
  const Matrix& v = x.value();
  Matrix out(static_cast<Eigen::Index>(idx.size()), v.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= v.rows())
      throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = v.row(idx[i]);
  }
  Eigen::Index r = v.rows(), c = v.cols();
  auto xn = x.node();
  return make_tensor(std::move(out), {x}, [xn, idx, r, c](const Matrix& g) {
    Matrix dx = Matrix::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i)
      dx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    accum(xn, dx);
  });
}

Tensor neighbor_gather(const Tensor& col, const IndexMatrix& idx) {
  if (col.cols() != 1)
    throw ShapeError("neighbor_gather: expected a column vector");
  const Matrix& v = col.value();
  Matrix out(idx.rows(), idx.cols());
  for (Eigen::Index i = 0; i < idx.rows(); ++i)
    for (Eigen::Index j = 0; j < idx.cols(); ++j) {
      if (idx(i, j) < 0 || idx(i, j) >= v.rows())
        throw ShapeError("neighbor_gather: index out of range");
      out(i, j) = v(idx(i, j), 0);
    }
  Eigen::Index r = v.rows();
  auto cn = col.node();
  return make_tensor(std::move(out), {col}, [cn, idx, r](const Matrix& g) {
    Matrix dx = Matrix::Zero(r, 1);
    for (Eigen::Index i = 0; i < idx.rows(); ++i)
      for (Eigen::Index j = 0; j < idx.cols(); ++j) dx(idx(i, j), 0) += g(i, j);
    accum(cn, dx);
  });
}

Tensor attention_aggregate(const Tensor& z, const IndexMatrix& idx,
                           const Tensor& alpha) {
  if (alpha.rows() != idx.rows() || alpha.cols() != idx.cols())
    throw ShapeError("attention_aggregate: alpha shape does not match index lists");
  const Matrix& zv = z.value();
  const Matrix& av = alpha.value();
  Matrix out = Matrix::Zero(idx.rows(), zv.cols());
  for (Eigen::Index i = 0; i < idx.rows(); ++i)
    for (Eigen::Index j = 0; j < idx.cols(); ++j) {
      if (idx(i, j) < 0 || idx(i, j) >= zv.rows())
        throw ShapeError("attention_aggregate: index out of range");
      out.row(i) += av(i, j) * zv.row(idx(i, j));
    }
  auto zn = z.node();
  auto an = alpha.node();
  Matrix zc = zv, ac = av;
  return make_tensor(std::move(out), {z, alpha},
                     [zn, an, idx, zc, ac](const Matrix& g) {
                       Matrix dz = Matrix::Zero(zc.rows(), zc.cols());
                       Matrix da = Matrix::Zero(ac.rows(), ac.cols());
                       for (Eigen::Index i = 0; i < idx.rows(); ++i)
                         for (Eigen::Index j = 0; j < idx.cols(); ++j) {
                           dz.row(idx(i, j)) += ac(i, j) * g.row(i);
                           da(i, j) = g.row(i).dot(zc.row(idx(i, j)));
                         }
                       accum(zn, dz);
                       accum(an, da);
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             const std::vector<double>& row_weight) {
  const Matrix& v = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != v.rows() ||
      static_cast<Eigen::Index>(row_weight.size()) != v.rows())
    throw ShapeError("softmax_cross_entropy: labels/weights must match row count");
  Matrix soft(v.rows(), v.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= v.cols())
      throw ShapeError("softmax_cross_entropy: label out of range");
    const double mx = v.row(i).maxCoeff();
    const Eigen::ArrayXd e = (v.row(i).array() - mx).exp();
    const double denom = e.sum();
    soft.row(i) = (e / denom).matrix();
    loss += row_weight[static_cast<std::size_t>(i)] *
            (std::log(denom) + mx - v(i, y));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  auto ln = logits.node();
  return make_tensor(std::move(out), {logits},
                     [ln, soft, labels, row_weight](const Matrix& g) {
                       Matrix dx = soft;
                       for (Eigen::Index i = 0; i < dx.rows(); ++i) {
                         dx(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
                         dx.row(i) *= row_weight[static_cast<std::size_t>(i)] * g(0, 0);
                       }
                       accum(ln, dx);
                     });
}

Tensor linear_solve(const Tensor& m, const Tensor& b) {
  const Matrix& mv = m.value();
  const Matrix& bv = b.value();
  if (mv.rows() != mv.cols())
    throw ShapeError("linear_solve: M must be square, got " + shape_str(mv));
  if (bv.rows() != mv.rows())
    throw ShapeError("linear_solve: B rows " + shape_str(bv) +
                     " do not match M " + shape_str(mv));
  auto lu = std::make_shared<Eigen::PartialPivLU<Matrix>>(mv);
  const double min_pivot = lu->matrixLU().diagonal().cwiseAbs().minCoeff();
  const double scale = mv.norm();
  if (min_pivot < 1e-12 * scale || scale == 0.0)
    throw ConditioningError("linear_solve: system is singular or ill-conditioned "
                            "(min pivot " + std::to_string(min_pivot) +
                            ", 1e-12*||M|| = " + std::to_string(1e-12 * scale) + ")");
  Matrix x = lu->solve(bv);
  auto mn = m.node();
  auto bn = b.node();
  Matrix xc = x;
  return make_tensor(std::move(x), {m, b}, [mn, bn, lu, xc](const Matrix& g) {
    const Matrix gb = lu->transpose().solve(g);  // M^-T g via the stored LU
    accum(bn, gb);
    accum(mn, -gb * xc.transpose());
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, BatchNormMode mode, double epsilon,
                  double momentum) {
  const Matrix& v = x.value();
  const Eigen::Index n = v.rows(), d = v.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw ShapeError("batch_norm: scale/shift must be 1x" + std::to_string(d));
  if (!state.initialized()) state.init(d);
  if (state.running_mean.cols() != d)
    throw ShapeError("batch_norm: state dimension mismatch");

  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();

  if (mode == BatchNormMode::Train) {
    if (n < 2)
      throw ShapeError("batch_norm: train mode needs a batch of >= 2 rows, got " +
                       std::to_string(n));
    const Matrix mean = v.colwise().mean();
    Matrix var(1, d);
    for (Eigen::Index j = 0; j < d; ++j)
      var(0, j) = (v.col(j).array() - mean(0, j)).square().sum() / double(n);
    Matrix inv_std = (var.array() + epsilon).rsqrt();
    Matrix xhat(n, d);
    for (Eigen::Index j = 0; j < d; ++j)
      xhat.col(j) = (v.col(j).array() - mean(0, j)) * inv_std(0, j);
    Matrix out(n, d);
    for (Eigen::Index j = 0; j < d; ++j)
      out.col(j) = xhat.col(j) * gamma.value()(0, j) + Matrix::Constant(n, 1, beta.value()(0, j));

    // running statistics use the unbiased batch variance
    const double unbias = double(n) / double(n - 1);
    state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mean;
    state.running_var = (1.0 - momentum) * state.running_var + momentum * (var * unbias);

    Matrix gv = gamma.value();
    return make_tensor(std::move(out), {x, gamma, beta},
                       [xn, gn, bn, xhat, inv_std, gv, n](const Matrix& g) {
                         accum(bn, g.colwise().sum());
                         accum(gn, g.cwiseProduct(xhat).colwise().sum());
                         // dx = gamma*inv_std * (g - mean(g) - xhat * mean(g .* xhat))
                         Matrix dx(g.rows(), g.cols());
                         for (Eigen::Index j = 0; j < g.cols(); ++j) {
                           const double gm = g.col(j).mean();
                           const double gxm = g.col(j).cwiseProduct(xhat.col(j)).mean();
                           dx.col(j) = gv(0, j) * inv_std(0, j) *
                                       (g.col(j).array() - gm - xhat.col(j).array() * gxm);
                         }
                         accum(xn, dx);
                       });
  }

  // eval mode: running statistics are constants
  Matrix inv_std = (state.running_var.array() + epsilon).rsqrt();
  Matrix xhat(n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    xhat.col(j) = (v.col(j).array() - state.running_mean(0, j)) * inv_std(0, j);
  Matrix out(n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    out.col(j) = xhat.col(j) * gamma.value()(0, j) + Matrix::Constant(n, 1, beta.value()(0, j));
  Matrix gv = gamma.value();
  return make_tensor(std::move(out), {x, gamma, beta},
                     [xn, gn, bn, xhat, inv_std, gv](const Matrix& g) {
                       accum(bn, g.colwise().sum());
                       accum(gn, g.cwiseProduct(xhat).colwise().sum());
                       Matrix dx(g.rows(), g.cols());
                       for (Eigen::Index j = 0; j < g.cols(); ++j)
                         dx.col(j) = g.col(j) * (gv(0, j) * inv_std(0, j));
                       accum(xn, dx);
                     });
}

void AdamOptimizer::step(const std::vector<Tensor>& params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(step_));
  for (const Tensor& p : params) {
    auto node = p.node().get();
    const Matrix g = p.has_grad() ? p.grad()
                                  : Matrix::Zero(p.rows(), p.cols());
    auto& slot = slots_[node];
    if (slot.m.size() == 0) {
      slot.m = Matrix::Zero(p.rows(), p.cols());
      slot.v = Matrix::Zero(p.rows(), p.cols());
    }
    slot.m = config_.beta1 * slot.m + (1.0 - config_.beta1) * g;
    slot.v = config_.beta2 * slot.v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Matrix mhat = slot.m / bc1;
    const Matrix vhat = slot.v / bc2;
    Matrix value = p.value();
    if (config_.weight_decay != 0.0)
      value -= config_.learning_rate * config_.weight_decay * value;  // decoupled
    value -= config_.learning_rate *
             (mhat.array() / (vhat.array().sqrt() + config_.epsilon)).matrix();
    const_cast<Tensor&>(p).set_value(std::move(value));
  }
}

void zero_grads(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
}

}  // namespace tgg
