#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tgg/protograph.hpp"
#include "tgg/rng.hpp"

using namespace tgg;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::ofstream out(name);
  out << content;
  return name;
}

struct Cleanup {
  std::string path;
  ~Cleanup() { std::filesystem::remove(path); }
};

void check_symmetric_zero_diag(const PrototypeGraph& g) {
  CHECK((g.weights - g.weights.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.weights.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.weights.minCoeff() >= 0.0);
  CHECK(g.weights.maxCoeff() <= 1.0);
}

}  // namespace

TEST_CASE("edge list import normalizes and symmetrizes") {
  Cleanup f{write_temp("pg_single.tsv", "0\t1\t2.0\n")};
  auto g = PrototypeGraph::from_edge_list(f.path, {0, 1, 2});
  CHECK(g.weight_between(0, 1) == 1.0);
  CHECK(g.weight_between(1, 0) == 1.0);
  CHECK(g.weight_between(0, 2) == 0.0);
  CHECK(g.weight_between(1, 2) == 0.0);
  check_symmetric_zero_diag(g);
}

TEST_CASE("duplicate edge rows: max weight wins") {
  Cleanup f{write_temp("pg_dup.tsv", "0\t1\t1.0\n1\t0\t4.0\n0\t1\t2.0\n0\t2\t4.0\n")};
  auto g = PrototypeGraph::from_edge_list(f.path, {0, 1, 2});
  CHECK(g.weight_between(0, 1) == 1.0);  // max(1,4,2)=4, normalized by max weight 4
  CHECK(g.weight_between(0, 2) == 1.0);
}

TEST_CASE("empty edge list yields a valid all-zeros graph") {
  Cleanup f{write_temp("pg_empty.tsv", "")};
  auto g = PrototypeGraph::from_edge_list(f.path, {0, 1, 2});
  CHECK(g.weights.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.edge_count() == 0);
  check_symmetric_zero_diag(g);
}

TEST_CASE("edge list rejects unknown classes and negative weights") {
  Cleanup f{write_temp("pg_bad1.tsv", "0\t9\t1.0\n")};
  CHECK_THROWS_AS(PrototypeGraph::from_edge_list(f.path, {0, 1}), SchemaError);
  Cleanup f2{write_temp("pg_bad2.tsv", "0\t1\t-1.0\n")};
  CHECK_THROWS_AS(PrototypeGraph::from_edge_list(f2.path, {0, 1}), ValueError);
}

TEST_CASE("attribute similarity graph") {
  Matrix attrs(3, 2);
  attrs << 1, 0, 1, 1, 0, 1;
  auto g = PrototypeGraph::from_attributes(attrs, {0, 1, 2});
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(g.weight_between(0, 1) == doctest::Approx(inv_sqrt2));
  CHECK(g.weight_between(1, 2) == doctest::Approx(inv_sqrt2));
  CHECK(g.weight_between(0, 2) == 0.0);
  check_symmetric_zero_diag(g);

  // identical rows -> weight 1
  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  auto g2 = PrototypeGraph::from_attributes(same, {0, 1});
  CHECK(g2.weight_between(0, 1) == doctest::Approx(1.0));

  // zero attribute row is a degenerate class
  Matrix zero(2, 2);
  zero << 1, 0, 0, 0;
  CHECK_THROWS_AS(PrototypeGraph::from_attributes(zero, {0, 1}), ValueError);
}

TEST_CASE("attribute graph is invariant to positive row rescaling") {
  Rng rng(3);
  Matrix attrs = rng.normal_matrix(6, 5);
  auto g1 = PrototypeGraph::from_attributes(attrs, {0, 1, 2, 3, 4, 5});
  Matrix scaled = attrs;
  scaled.row(2) *= 17.0;
  scaled.row(5) *= 0.003;
  auto g2 = PrototypeGraph::from_attributes(scaled, {0, 1, 2, 3, 4, 5});
  CHECK((g1.weights - g2.weights).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("crop thresholds") {
  Matrix attrs(3, 2);
  attrs << 1, 0, 1, 1, 0, 1;
  auto g = PrototypeGraph::from_attributes(attrs, {0, 1, 2});

  auto g0 = crop(g, 0.0);
  CHECK((g0.weights - g.weights).cwiseAbs().maxCoeff() == 0.0);

  auto g5 = crop(g, 0.5);  // the two 1/sqrt(2) edges survive
  CHECK(g5.weight_between(0, 1) > 0.0);
  CHECK(g5.weight_between(1, 2) > 0.0);
  CHECK(g5.edge_count() == 2);

  // strict comparison: only weight-1.0 edges survive threshold 1.0
  auto g1 = crop(g, 1.0);
  CHECK(g1.edge_count() == 0);
  Matrix ident(2, 2);
  ident << 3, 4, 3, 4;
  auto gi = crop(PrototypeGraph::from_attributes(ident, {0, 1}), 1.0);
  CHECK(gi.weight_between(0, 1) == 1.0);
}

TEST_CASE("crop is monotone in the threshold") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix attrs = rng.normal_matrix(8, 6);
    auto g = PrototypeGraph::from_attributes(attrs, {0, 1, 2, 3, 4, 5, 6, 7});
    double prev_threshold = 0.0;
    auto prev = crop(g, prev_threshold);
    for (double t : {0.2, 0.4, 0.6, 0.8, 1.0}) {
      auto cur = crop(g, t);
      for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j)
          if (cur.weights(i, j) > 0.0) CHECK(prev.weights(i, j) > 0.0);
      prev = cur;
    }
  }
}

TEST_CASE("class attention row") {
  Matrix attrs(3, 2);
  attrs << 1, 0, 1, 1, 0, 1;
  auto g = PrototypeGraph::from_attributes(attrs, {0, 1, 2});

  // all-zero prototype weights normalize to uniform
  Vector uniform = class_attention_row(crop(g, 2.0), 0, {1, 2, 2});
  for (int j = 0; j < 3; ++j) CHECK(uniform(j) == doctest::Approx(1.0 / 3.0));

  // raw weights [1, 0] -> softmax([1, 0])
  Matrix attrs2(3, 2);
  attrs2 << 1, 0, 1, 0, 0, 1;  // w(0,1)=1, w(0,2)=0
  auto g2 = PrototypeGraph::from_attributes(attrs2, {0, 1, 2});
  Vector w = class_attention_row(g2, 0, {1, 2});
  CHECK(std::abs(w(0) - 0.731) <= 1e-3);
  CHECK(std::abs(w(1) - 0.269) <= 1e-3);
  CHECK(w.sum() == doctest::Approx(1.0));

  // permuting the neighbor list permutes the output
  Vector wp = class_attention_row(g2, 0, {2, 1});
  CHECK(wp(0) == w(1));
  CHECK(wp(1) == w(0));

  CHECK_THROWS_AS(class_attention_row(g2, 0, {}), ValueError);
}

TEST_CASE("edge list export/import round trip") {
  Rng rng(9);
  Matrix attrs = rng.normal_matrix(5, 4);
  auto g = PrototypeGraph::from_attributes(attrs, {0, 1, 2, 3, 4});
  Cleanup f{"pg_roundtrip.tsv"};
  save_edge_list(g, f.path);
  auto g2 = PrototypeGraph::from_edge_list(f.path, {0, 1, 2, 3, 4});
  // from_attributes output is already max <= 1; re-normalization rescales by
  // the max weight, so compare shapes after matching normalization
  const double mx = g.weights.maxCoeff();
  CHECK((g2.weights * mx - g.weights).cwiseAbs().maxCoeff() <= 1e-12);
}
