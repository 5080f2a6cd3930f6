#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tgg/errors.hpp"
#include "tgg/tensor.hpp"

namespace tgg {

struct Splits {
  std::vector<int> train, val, test_seen, test_unseen;
  std::map<std::string, std::vector<int>> extra;  // additional named splits
};

/// Canonical dataset model: instance features, per-class attribute vectors,
/// the seen/unseen class partition and named index splits. Immutable after
/// load; freely shareable.
struct Dataset {
  Matrix features;              // N x d
  std::vector<int> labels;      // class id per instance
  std::vector<int> instance_ids;
  Matrix attributes;            // C x m, one row per class
  std::vector<int> class_ids;   // attribute row -> class id
  std::vector<int> seen_classes;    // sorted
  std::vector<int> unseen_classes;  // sorted
  Splits splits;

  Eigen::Index num_instances() const { return features.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }
  Eigen::Index attribute_dim() const { return attributes.cols(); }
  Eigen::Index num_classes() const { return attributes.rows(); }

  /// Attribute row for a class id; SchemaError if unknown.
  Eigen::Index class_index(int class_id) const;
  bool is_seen(int class_id) const;
  bool is_unseen(int class_id) const;
  const std::vector<int>& split(const std::string& name) const;
  std::vector<int> instances_of_class(const std::string& split_name, int class_id) const;
};

/// Desk-scale synthetic dataset recipe. Attributes are drawn once per class;
/// the class mean is a fixed linear map of the attribute vector; instances
/// add isotropic Gaussian noise of spread sigma_cls.
struct SyntheticSpec {
  int seen_classes = 10;
  int unseen_classes = 5;
  int feature_dim = 32;
  int attribute_dim = 8;
  double sigma_cls = 0.3;
  int instances_per_class = 60;
  std::uint64_t map_seed = 9001;  // attribute -> feature mixing matrix
  std::uint64_t seed = 0;

  void check() const;
};

/// CSV `instance_id,label,f1..fd` / CSV `label,a1..am` / JSON named splits.
Dataset load_dataset(const std::string& features_path,
                     const std::string& attributes_path,
                     const std::string& splits_path);

void save_dataset(const Dataset& ds, const std::string& features_path,
                  const std::string& attributes_path,
                  const std::string& splits_path);

/// Feature rows in the dataio CSV format (used by the synthesizer export).
void save_features_csv(const Matrix& features, const std::vector<int>& labels,
                       const std::vector<int>& instance_ids,
                       const std::string& path);

Dataset generate_synthetic(const SyntheticSpec& spec);

/// The attribute -> class-mean mixing matrix a spec encodes (ground truth for
/// synthesizer-recovery oracles).
Matrix synthetic_mixing_matrix(const SyntheticSpec& spec);

/// Features shifted/scaled by train-split statistics only; zero-variance
/// columns are shifted but left unscaled. Attribute rows are L2-normalized.
Dataset standardize(const Dataset& ds);

/// Throws on the first violated invariant.
void validate_dataset(const Dataset& ds);

/// Human-readable invariant report for the `dataset validate` subcommand.
std::string invariant_report(const Dataset& ds);

/// FSL variant: moves exactly k instances per unseen class from the
/// `unseen_pool` split into train.
Dataset with_fsl_support(const Dataset& ds, int k, std::uint64_t seed);

}  // namespace tgg
