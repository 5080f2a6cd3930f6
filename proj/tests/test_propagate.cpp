#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tgg/propagate.hpp"
#include "tgg/rng.hpp"

using namespace tgg;
using tgg::testing::gradcheck;

namespace {

Matrix random_adjacency(Rng& rng, Eigen::Index n) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = rng.uniform();
      a(i, j) = v;
      a(j, i) = v;
    }
  }
  return a;
}

Matrix random_labels(Rng& rng, Eigen::Index n, Eigen::Index c, double labeled_frac) {
  Matrix y = Matrix::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i)
    if (rng.uniform() < labeled_frac) y(i, rng.uniform_index(std::uint64_t(c))) = 1.0;
  return y;
}

// Iterative fixed-point oracle: F <- mu S F + Y.
Matrix propagation_fixed_point(const Matrix& a, const Matrix& y, double mu, int steps) {
  const Eigen::Index n = a.rows();
  Matrix with_self = a + Matrix::Identity(n, n);
  Vector d = with_self.rowwise().sum();
  Matrix s(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      s(i, j) = with_self(i, j) / std::sqrt(d(i) * d(j));
  Matrix f = y;
  for (int t = 0; t < steps; ++t) f = mu * s * f + y;
  return f;
}

}  // namespace

TEST_CASE("propagation at vanishing mu returns the labeled matrix") {
  Rng rng(3);
  Matrix a = random_adjacency(rng, 12);
  Matrix y = random_labels(rng, 12, 3, 0.5);
  Matrix y_star = propagate_closed_form(Tensor::constant(a), y, 1e-12).value();
  CHECK((y_star - y).cwiseAbs().maxCoeff() <= 1e-9);

  CHECK_THROWS_AS(propagate_closed_form(Tensor::constant(a), y, 0.0), ConfigError);
  CHECK_THROWS_AS(propagate_closed_form(Tensor::constant(a), y, 1.0), ConfigError);
}

TEST_CASE("closed form equals the 1000-step iterative fixed point") {
  Rng rng(5);
  for (double mu : {0.1, 0.5, 0.9}) {
    for (int rep = 0; rep < 4; ++rep) {
      const Eigen::Index n = 50;
      Matrix a = random_adjacency(rng, n);
      Matrix y = random_labels(rng, n, 4, 0.3);
      Matrix closed = propagate_closed_form(Tensor::constant(a), y, mu).value();
      Matrix iter = propagation_fixed_point(a, y, mu, 1000);
      CHECK((closed - iter).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("labels do not leak across disconnected components") {
  Matrix a = Matrix::Zero(6, 6);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) {
        a(i, j) = 0.8;
        a(3 + i, 3 + j) = 0.8;
      }
  Matrix y = Matrix::Zero(6, 2);
  y(0, 0) = 1.0;
  y(1, 1) = 1.0;  // labels only in component 1
  Matrix y_star = propagate_closed_form(Tensor::constant(a), y, 0.5).value();
  CHECK(y_star.bottomRows(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(y_star.topRows(3).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("dual propagation loss: oracle equivalence, symmetry, positivity") {
  Rng rng(7);
  const Eigen::Index n = 10;
  Matrix a = random_adjacency(rng, n);
  LabelMatrix labels;
  labels.onehot = Matrix::Zero(n, 3);
  labels.labeled.assign(n, false);
  std::vector<bool> unseen(n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    labels.onehot(i, i % 3) = 1.0;
    if (i < 6) labels.labeled[size_t(i)] = true;
    if (i % 2 == 0) unseen[size_t(i)] = true;
  }

  const double loss = dual_propagation_loss(Tensor::constant(a), labels, unseen, 0.5).item();
  CHECK(loss >= 0.0);

  // oracle: two separate closed-form propagations, then the Frobenius gap
  Matrix y_seen = Matrix::Zero(n, 3), y_unseen = Matrix::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!labels.labeled[size_t(i)]) continue;
    (unseen[size_t(i)] ? y_unseen : y_seen).row(i) = labels.onehot.row(i);
  }
  Matrix f_seen = propagate_closed_form(Tensor::constant(a), y_seen, 0.5).value();
  Matrix f_unseen = propagate_closed_form(Tensor::constant(a), y_unseen, 0.5).value();
  CHECK(loss == doctest::Approx((f_seen - f_unseen).squaredNorm()).epsilon(1e-10));

  // swapping the domain masks leaves the loss unchanged
  std::vector<bool> flipped(n);
  for (Eigen::Index i = 0; i < n; ++i) flipped[size_t(i)] = !unseen[size_t(i)];
  CHECK(dual_propagation_loss(Tensor::constant(a), labels, flipped, 0.5).item() ==
        doctest::Approx(loss).epsilon(1e-12));

  // identical propagated matrices make the loss vanish
  CHECK((f_seen - f_seen).squaredNorm() == 0.0);

  // both domains must contribute labeled nodes
  std::vector<bool> all_seen(n, false);
  CHECK_THROWS_AS(dual_propagation_loss(Tensor::constant(a), labels, all_seen, 0.5),
                  EpisodeError);
}

TEST_CASE("dual propagation loss gradient through the solve") {
  Rng rng(9);
  const Eigen::Index n = 8;
  Tensor a = Tensor::param(random_adjacency(rng, n));
  LabelMatrix labels;
  labels.onehot = Matrix::Zero(n, 2);
  labels.labeled.assign(n, false);
  std::vector<bool> unseen(n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    labels.onehot(i, i % 2) = 1.0;
    labels.labeled[size_t(i)] = i < 5;
    unseen[size_t(i)] = i % 3 == 0;
  }
  auto forward = [&] { return dual_propagation_loss(a, labels, unseen, 0.5); };
  CHECK(gradcheck({a}, forward) <= 1e-4);
}

TEST_CASE("gradient of the classification path through the solve") {
  Rng rng(11);
  const Eigen::Index n = 8;
  Tensor a = Tensor::param(random_adjacency(rng, n));
  Matrix y = random_labels(rng, n, 3, 0.6);
  std::vector<int> node_labels;
  std::vector<double> weights;
  for (Eigen::Index i = 0; i < n; ++i) {
    node_labels.push_back(int(i) % 3);
    weights.push_back(1.0);
  }
  auto forward = [&] {
    return softmax_cross_entropy(propagate_closed_form(a, y, 0.5), node_labels, weights);
  };
  CHECK(gradcheck({a}, forward) <= 1e-4);
}

TEST_CASE("prediction: softmax rows, argmax invariance, spec values") {
  Matrix y_star(3, 3);
  y_star << 1.0, 1.0, 1.0, 5.0, 0.0, 0.0, 0.3, 2.1, -0.4;
  Matrix p = predict(y_star, {0, 1, 2});
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-12);
  CHECK(p(0, 0) == doctest::Approx(1.0 / 3.0));
  const double e5 = std::exp(5.0);
  CHECK(p(1, 0) == doctest::Approx(e5 / (e5 + 2.0)).epsilon(1e-10));
  CHECK(p(1, 0) >= 0.98);

  // positive scaling never changes the argmax
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix row = rng.normal_matrix(1, 5);
    Matrix p1 = predict(row, {0});
    Matrix p2 = predict(row * 7.3, {0});
    Eigen::Index a1, a2;
    p1.row(0).maxCoeff(&a1);
    p2.row(0).maxCoeff(&a2);
    CHECK(a1 == a2);
  }

  CHECK_THROWS_AS(predict(y_star, {5}), ShapeError);
}

TEST_CASE("support nodes keep their own labels on well-separated graphs") {
  Rng rng(17);
  int consistent = 0, total = 0;
  for (int episode = 0; episode < 50; ++episode) {
    const int n_class = 4, per_class = 5;
    const Eigen::Index n = n_class * per_class;
    // well-separated class clusters, kernel adjacency
    Matrix x(n, 3);
    for (int c = 0; c < n_class; ++c)
      for (int i = 0; i < per_class; ++i)
        x.row(c * per_class + i) =
            (10.0 * rng.normal_matrix(1, 3).setZero().array() + 6.0 * c).matrix() +
            rng.normal_matrix(1, 3) * 0.4;
    Matrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        a(i, j) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / 2.0);
    LabelMatrix labels;
    labels.onehot = Matrix::Zero(n, n_class);
    labels.labeled.assign(size_t(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      labels.onehot(i, int(i) / per_class) = 1.0;
      labels.labeled[size_t(i)] = (i % per_class) < 2;  // 2 supports per class
    }
    Matrix y_star =
        propagate_closed_form(Tensor::constant(a), labels.labeled_only(), 0.5).value();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!labels.labeled[size_t(i)]) continue;
      Eigen::Index argmax;
      y_star.row(i).maxCoeff(&argmax);
      ++total;
      if (argmax == int(i) / per_class) ++consistent;
    }
  }
  CHECK(double(consistent) / double(total) >= 0.99);
}
