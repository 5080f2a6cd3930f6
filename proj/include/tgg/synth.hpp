#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tgg/dataio.hpp"

namespace tgg {

/// Conditional Gaussian feature synthesizer: a ridge-fitted linear map from
/// class attributes to feature-space class means, plus pooled within-class
/// noise. Produces the dummy unseen-class features that stand in for real
/// support instances. Immutable after fit; concurrent sampling with distinct
/// seeds is safe.
struct ConditionalSynthesizer {
  Matrix mean_map;     // d x m, attribute -> class mean
  Vector noise_scale;  // d, pooled within-class standard deviation
  double fit_residual = 0.0;  // Frobenius residual of the mean fit
  bool underdetermined = false;
  Matrix attributes;          // C x m, copied from the dataset
  std::vector<int> class_ids;

  Vector class_mean(int class_id) const;

  /// count rows of mean_map * e_class + noise_scale-scaled Gaussian noise,
  /// deterministic under seed.
  Matrix sample(int class_id, int count, std::uint64_t seed) const;
};

/// Least-squares fit of attributes -> per-class train means over the seen
/// classes (minus any excluded ones), ridge-regularized. The noise scale is
/// pooled across the same classes. Fewer fit classes than attribute
/// dimensions flags the solution as underdetermined (ridge keeps it usable).
ConditionalSynthesizer fit_synthesizer(const Dataset& ds, double ridge = 1e-6,
                                       const std::vector<int>& exclude_classes = {});

void save_synthesizer(const ConditionalSynthesizer& s, const std::string& path);
ConditionalSynthesizer load_synthesizer(const std::string& path);

}  // namespace tgg
