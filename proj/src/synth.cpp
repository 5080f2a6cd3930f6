#include "tgg/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>

#include "tgg/rng.hpp"

namespace tgg {

Vector ConditionalSynthesizer::class_mean(int class_id) const {
  for (std::size_t i = 0; i < class_ids.size(); ++i)
    if (class_ids[i] == class_id)
      return mean_map * attributes.row(static_cast<Eigen::Index>(i)).transpose();
  throw SchemaError("synthesizer: unknown class " + std::to_string(class_id));
}

Matrix ConditionalSynthesizer::sample(int class_id, int count,
                                      std::uint64_t seed) const {
  if (count <= 0) throw ConfigError("synthesizer: sample count must be positive");
  const Vector mean = class_mean(class_id);
  Rng rng(seed);
  Matrix out(count, mean.size());
  for (int i = 0; i < count; ++i)
    for (Eigen::Index j = 0; j < mean.size(); ++j)
      out(i, j) = mean(j) + noise_scale(j) * rng.normal();
  return out;
}

ConditionalSynthesizer fit_synthesizer(const Dataset& ds, double ridge,
                                       const std::vector<int>& exclude_classes) {
  std::vector<int> fit_classes;
  for (int c : ds.seen_classes)
    if (std::find(exclude_classes.begin(), exclude_classes.end(), c) ==
        exclude_classes.end())
      fit_classes.push_back(c);
  if (fit_classes.empty())
    throw InvariantError("fit_synthesizer: no seen classes left to fit on");

  // per-class train means
  std::map<int, Vector> sums;
  std::map<int, int> counts;
  for (int idx : ds.splits.train) {
    const int c = ds.labels[static_cast<std::size_t>(idx)];
    if (std::find(fit_classes.begin(), fit_classes.end(), c) == fit_classes.end())
      continue;
    if (!counts[c]++) sums[c] = Vector::Zero(ds.feature_dim());
    sums[c] += ds.features.row(idx).transpose();
  }
  std::vector<int> present;
  for (int c : fit_classes)
    if (counts.count(c)) present.push_back(c);
  if (present.empty())
    throw InvariantError("fit_synthesizer: train split has no seen-class instances");

  const Eigen::Index m = ds.attribute_dim(), d = ds.feature_dim();
  const Eigen::Index cf = static_cast<Eigen::Index>(present.size());
  Matrix attr_rows(cf, m);   // A
  Matrix mean_rows(cf, d);   // U
  for (Eigen::Index i = 0; i < cf; ++i) {
    const int c = present[static_cast<std::size_t>(i)];
    attr_rows.row(i) = ds.attributes.row(ds.class_index(c));
    mean_rows.row(i) = (sums[c] / counts[c]).transpose();
  }

  ConditionalSynthesizer s;
  s.underdetermined = cf < m;
  // M^T = (A^T A + ridge I)^-1 A^T U
  const Matrix gram = attr_rows.transpose() * attr_rows + ridge * Matrix::Identity(m, m);
  s.mean_map = gram.ldlt().solve(attr_rows.transpose() * mean_rows).transpose();
  s.fit_residual = (attr_rows * s.mean_map.transpose() - mean_rows).norm();
  s.attributes = ds.attributes;
  s.class_ids = ds.class_ids;

  // pooled within-class deviation over the fit classes
  s.noise_scale = Vector::Zero(d);
  long dof = 0;
  for (int idx : ds.splits.train) {
    const int c = ds.labels[static_cast<std::size_t>(idx)];
    if (!counts.count(c)) continue;
    const Vector mean = sums[c] / counts[c];
    s.noise_scale += (ds.features.row(idx).transpose() - mean).cwiseAbs2();
    ++dof;
  }
  dof -= cf;
  if (dof > 0)
    s.noise_scale = (s.noise_scale / static_cast<double>(dof)).cwiseSqrt();
  else
    s.noise_scale.setZero();
  return s;
}

void save_synthesizer(const ConditionalSynthesizer& s, const std::string& path) {
  nlohmann::json doc;
  auto matrix_to_json = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  doc["mean_map"] = matrix_to_json(s.mean_map);
  doc["noise_scale"] = std::vector<double>(s.noise_scale.data(),
                                           s.noise_scale.data() + s.noise_scale.size());
  doc["fit_residual"] = s.fit_residual;
  doc["underdetermined"] = s.underdetermined;
  doc["attributes"] = matrix_to_json(s.attributes);
  doc["class_ids"] = s.class_ids;
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << doc.dump(2) << "\n";
}

ConditionalSynthesizer load_synthesizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open synthesizer file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  auto matrix_from_json = [](const nlohmann::json& rows) {
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
    return m;
  };
  ConditionalSynthesizer s;
  s.mean_map = matrix_from_json(doc.at("mean_map"));
  const auto noise = doc.at("noise_scale").get<std::vector<double>>();
  s.noise_scale = Eigen::Map<const Vector>(noise.data(), static_cast<Eigen::Index>(noise.size()));
  s.fit_residual = doc.at("fit_residual").get<double>();
  s.underdetermined = doc.at("underdetermined").get<bool>();
  s.attributes = matrix_from_json(doc.at("attributes"));
  s.class_ids = doc.at("class_ids").get<std::vector<int>>();
  return s;
}

}  // namespace tgg
