#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "tgg/dataio.hpp"
#include "tgg/rng.hpp"

using namespace tgg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::path("tmp_dataio_test") / std::to_string(reinterpret_cast<uintptr_t>(this));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path.parent_path()); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// Toy fixture: 4 instances, classes {0,1} seen and {2} unseen.
void write_toy(const TempDir& dir) {
  write_file(dir.file("features.csv"),
             "instance_id,label,f1,f2\n"
             "0,0,1.0,0.0\n"
             "1,0,1.1,0.1\n"
             "2,1,0.0,1.0\n"
             "3,2,-1.0,-1.0\n");
  write_file(dir.file("attributes.csv"),
             "label,a1,a2\n"
             "0,1.0,0.0\n"
             "1,0.0,1.0\n"
             "2,0.5,0.5\n");
  write_file(dir.file("splits.json"),
             R"({"seen_classes": [0, 1], "unseen_classes": [2],
                 "train": [0, 2], "val": [], "test_seen": [1], "test_unseen": [3]})");
}

}  // namespace

TEST_CASE("toy dataset loads with the expected class partition") {
  TempDir dir;
  write_toy(dir);
  Dataset ds = load_dataset(dir.file("features.csv"), dir.file("attributes.csv"),
                            dir.file("splits.json"));
  CHECK(ds.num_instances() == 4);
  CHECK(ds.feature_dim() == 2);
  CHECK(ds.attribute_dim() == 2);
  CHECK(ds.seen_classes.size() == 2);
  CHECK(ds.unseen_classes.size() == 1);
  CHECK(ds.is_seen(0));
  CHECK(ds.is_unseen(2));
  CHECK(ds.splits.train == std::vector<int>{0, 2});
}

TEST_CASE("split referencing a nonexistent instance fails") {
  TempDir dir;
  write_toy(dir);
  write_file(dir.file("splits.json"),
             R"({"seen_classes": [0, 1], "unseen_classes": [2],
                 "train": [0, 99], "val": [], "test_seen": [1], "test_unseen": [3]})");
  CHECK_THROWS_AS(load_dataset(dir.file("features.csv"), dir.file("attributes.csv"),
                               dir.file("splits.json")),
                  SchemaError);
}

TEST_CASE("missing attribute row for a label fails") {
  TempDir dir;
  write_toy(dir);
  write_file(dir.file("attributes.csv"),
             "label,a1,a2\n"
             "0,1.0,0.0\n"
             "1,0.0,1.0\n");  // class 2 missing
  CHECK_THROWS_AS(load_dataset(dir.file("features.csv"), dir.file("attributes.csv"),
                               dir.file("splits.json")),
                  SchemaError);
}

TEST_CASE("overlapping seen/unseen sets fail") {
  TempDir dir;
  write_toy(dir);
  write_file(dir.file("splits.json"),
             R"({"seen_classes": [0, 1, 2], "unseen_classes": [2],
                 "train": [0, 2], "val": [], "test_seen": [1], "test_unseen": [3]})");
  CHECK_THROWS_AS(load_dataset(dir.file("features.csv"), dir.file("attributes.csv"),
                               dir.file("splits.json")),
                  InvariantError);
}

TEST_CASE("ragged feature rows report the line number") {
  TempDir dir;
  write_toy(dir);
  write_file(dir.file("features.csv"),
             "instance_id,label,f1,f2\n"
             "0,0,1.0,0.0\n"
             "1,0,1.1\n");  // line 3 is short
  try {
    load_dataset(dir.file("features.csv"), dir.file("attributes.csv"),
                 dir.file("splits.json"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
}

TEST_CASE("aPY-shaped dataset round-trips with matching counts") {
  // 15+5 seen classes and 12 unseen, 64-dim attributes, 2048-dim features
  TempDir dir;
  Dataset ds;
  const int n_classes = 32;
  Rng rng(5);
  ds.attributes = rng.normal_matrix(n_classes, 64);
  ds.features = rng.normal_matrix(n_classes * 2, 2048);
  for (int c = 0; c < n_classes; ++c) {
    ds.class_ids.push_back(c);
    if (c < 20)
      ds.seen_classes.push_back(c);
    else
      ds.unseen_classes.push_back(c);
    for (int i = 0; i < 2; ++i) {
      ds.labels.push_back(c);
      ds.instance_ids.push_back(2 * c + i);
    }
  }
  for (int c = 0; c < n_classes; ++c) {
    if (c < 20) {
      ds.splits.train.push_back(2 * c);
      ds.splits.test_seen.push_back(2 * c + 1);
    } else {
      ds.splits.test_unseen.push_back(2 * c);
      ds.splits.test_unseen.push_back(2 * c + 1);
    }
  }
  save_dataset(ds, dir.file("f.csv"), dir.file("a.csv"), dir.file("s.json"));
  Dataset loaded = load_dataset(dir.file("f.csv"), dir.file("a.csv"), dir.file("s.json"));
  CHECK(loaded.feature_dim() == 2048);
  CHECK(loaded.attribute_dim() == 64);
  CHECK(loaded.seen_classes.size() == 20);
  CHECK(loaded.unseen_classes.size() == 12);
}

TEST_CASE("save/load round-trip is exact") {
  SyntheticSpec spec;
  spec.instances_per_class = 12;
  spec.seed = 3;
  Dataset ds = generate_synthetic(spec);
  TempDir dir;
  save_dataset(ds, dir.file("f.csv"), dir.file("a.csv"), dir.file("s.json"));
  Dataset loaded = load_dataset(dir.file("f.csv"), dir.file("a.csv"), dir.file("s.json"));
  CHECK((loaded.features - ds.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.attributes - ds.attributes).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.labels == ds.labels);
  CHECK(loaded.instance_ids == ds.instance_ids);
  CHECK(loaded.splits.train == ds.splits.train);
  CHECK(loaded.splits.extra.at("unseen_pool") == ds.splits.extra.at("unseen_pool"));
}

TEST_CASE("synthetic generation is deterministic and respects sigma") {
  SyntheticSpec spec;
  spec.instances_per_class = 10;
  spec.seed = 42;
  Dataset a = generate_synthetic(spec);
  Dataset b = generate_synthetic(spec);
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.attributes - b.attributes).cwiseAbs().maxCoeff() == 0.0);

  // degenerate spread: all instances of a class collapse onto the class mean
  SyntheticSpec tight = spec;
  tight.sigma_cls = 1e-300;
  Dataset c = generate_synthetic(tight);
  const Matrix mix = synthetic_mixing_matrix(tight);
  for (int i = 0; i < 10; ++i) {
    const Vector mean = mix * c.attributes.row(c.labels[size_t(i)]).transpose();
    CHECK((c.features.row(i).transpose() - mean).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("nearest-class-mean oracle separates the seen test split") {
  SyntheticSpec spec;  // 10 seen / 5 unseen, d=32, m=8, sigma 0.3
  spec.seed = 1;
  Dataset ds = generate_synthetic(spec);

  std::map<int, Vector> means;
  std::map<int, int> counts;
  for (int idx : ds.splits.train) {
    const int c = ds.labels[size_t(idx)];
    if (!counts[c]++) means[c] = Vector::Zero(ds.feature_dim());
    means[c] += ds.features.row(idx).transpose();
  }
  for (auto& [c, v] : means) v /= counts[c];

  int correct = 0;
  for (int idx : ds.splits.test_seen) {
    double best = 1e300;
    int best_c = -1;
    for (const auto& [c, mean] : means) {
      const double d2 = (ds.features.row(idx).transpose() - mean).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_c = c;
      }
    }
    if (best_c == ds.labels[size_t(idx)]) ++correct;
  }
  const double acc = double(correct) / double(ds.splits.test_seen.size());
  CHECK(acc >= 0.95);
}

TEST_CASE("empirical class means approach attribute-mapped means at sigma/sqrt(n)") {
  SyntheticSpec spec;
  spec.instances_per_class = 500;
  spec.seed = 7;
  Dataset ds = generate_synthetic(spec);
  const Matrix mix = synthetic_mixing_matrix(spec);
  for (int c : {0, 4, 12}) {
    Vector sum = Vector::Zero(ds.feature_dim());
    int n = 0;
    for (Eigen::Index i = 0; i < ds.num_instances(); ++i)
      if (ds.labels[size_t(i)] == c) {
        sum += ds.features.row(i).transpose();
        ++n;
      }
    const Vector emp = sum / double(n);
    const Vector truth = mix * ds.attributes.row(ds.class_index(c)).transpose();
    // per-dimension deviation ~ sigma/sqrt(n); allow a generous 5x
    CHECK((emp - truth).cwiseAbs().maxCoeff() <=
          5.0 * spec.sigma_cls / std::sqrt(double(n)));
  }
}

TEST_CASE("standardize centers and scales by train statistics only") {
  SyntheticSpec spec;
  spec.instances_per_class = 24;
  spec.seed = 9;
  Dataset ds = generate_synthetic(spec);
  Dataset std1 = standardize(ds);

  const auto& train = std1.splits.train;
  for (Eigen::Index j = 0; j < std1.feature_dim(); ++j) {
    double mean = 0.0;
    for (int idx : train) mean += std1.features(idx, j);
    mean /= double(train.size());
    double var = 0.0;
    for (int idx : train) var += (std1.features(idx, j) - mean) * (std1.features(idx, j) - mean);
    var /= double(train.size());
    CHECK(std::abs(mean) <= 1e-10);
    CHECK(std::abs(var - 1.0) <= 1e-8);
  }
  for (Eigen::Index i = 0; i < std1.attributes.rows(); ++i)
    CHECK(std1.attributes.row(i).norm() == doctest::Approx(1.0));

  // idempotent
  Dataset std2 = standardize(std1);
  CHECK((std2.features - std1.features).cwiseAbs().maxCoeff() <= 1e-10);

  // perturbing test rows must not change the transform of other rows
  Dataset perturbed = ds;
  for (int idx : ds.splits.test_seen) perturbed.features.row(idx).array() += 100.0;
  Dataset std3 = standardize(perturbed);
  for (int idx : ds.splits.train)
    CHECK((std3.features.row(idx) - std1.features.row(idx)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("standardize leaves zero-variance columns unscaled") {
  SyntheticSpec spec;
  spec.instances_per_class = 12;
  spec.seed = 11;
  Dataset ds = generate_synthetic(spec);
  ds.features.col(0).setConstant(7.0);
  Dataset out = standardize(ds);
  // shifted to zero but not divided
  for (int idx : out.splits.train) CHECK(out.features(idx, 0) == 0.0);
}

TEST_CASE("with_fsl_support moves exactly K per unseen class into train") {
  SyntheticSpec spec;
  spec.instances_per_class = 18;
  spec.seed = 13;
  Dataset ds = generate_synthetic(spec);
  const std::size_t train_before = ds.splits.train.size();
  Dataset fsl = with_fsl_support(ds, 3, 99);
  CHECK(fsl.splits.train.size() == train_before + 3 * ds.unseen_classes.size());
  for (int c : fsl.unseen_classes)
    CHECK(fsl.instances_of_class("train", c).size() == 3);
  // test_unseen untouched
  CHECK(fsl.splits.test_unseen == ds.splits.test_unseen);
  CHECK_THROWS_AS(with_fsl_support(ds, 1000, 1), EpisodeError);
}

TEST_CASE("invariant report flags a corrupted dataset") {
  SyntheticSpec spec;
  spec.instances_per_class = 6;
  Dataset ds = generate_synthetic(spec);
  CHECK(invariant_report(ds).find("[FAIL]") == std::string::npos);
  ds.splits.train.push_back(ds.splits.test_unseen[0]);  // one stray unseen instance
  CHECK(invariant_report(ds).find("[FAIL]") != std::string::npos);
  CHECK_THROWS_AS(validate_dataset(ds), InvariantError);
}
