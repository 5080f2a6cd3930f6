#include "tgg/dataio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tgg/rng.hpp"

namespace tgg {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& path, int line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ParseError(path + ":" + std::to_string(line_no) + ": not a number: '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& path, int line_no) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw ParseError(path + ":" + std::to_string(line_no) + ": not an integer: '" + s + "'");
  return static_cast<int>(v);
}

bool looks_like_header(const std::string& line) {
  return !line.empty() && !std::isdigit(static_cast<unsigned char>(line[0])) &&
         line[0] != '-' && line[0] != '+' && line[0] != '.';
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Eigen::Index Dataset::class_index(int class_id) const {
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(class_ids.size()); ++i)
    if (class_ids[static_cast<std::size_t>(i)] == class_id) return i;
  throw SchemaError("unknown class id " + std::to_string(class_id));
}

bool Dataset::is_seen(int class_id) const {
  return std::binary_search(seen_classes.begin(), seen_classes.end(), class_id);
}

bool Dataset::is_unseen(int class_id) const {
  return std::binary_search(unseen_classes.begin(), unseen_classes.end(), class_id);
}

const std::vector<int>& Dataset::split(const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test_seen") return splits.test_seen;
  if (name == "test_unseen") return splits.test_unseen;
  auto it = splits.extra.find(name);
  if (it == splits.extra.end()) throw SchemaError("unknown split '" + name + "'");
  return it->second;
}

std::vector<int> Dataset::instances_of_class(const std::string& split_name,
                                             int class_id) const {
  std::vector<int> out;
  for (int idx : split(split_name))
    if (labels[static_cast<std::size_t>(idx)] == class_id) out.push_back(idx);
  return out;
}

void SyntheticSpec::check() const {
  if (seen_classes <= 0 || unseen_classes <= 0 || feature_dim <= 0 ||
      attribute_dim <= 0 || instances_per_class <= 0)
    throw ConfigError("synthetic spec: all counts must be positive");
  if (sigma_cls < 0.0) throw ConfigError("synthetic spec: sigma_cls must be >= 0");
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

Dataset load_dataset(const std::string& features_path,
                     const std::string& attributes_path,
                     const std::string& splits_path) {
  Dataset ds;

  // attributes: label,a1..am
  {
    std::ifstream in(attributes_path);
    if (!in) throw Error("cannot open attributes file: " + attributes_path);
    std::string line;
    int line_no = 0;
    std::vector<std::vector<double>> rows;
    Eigen::Index m = -1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line_no == 1 && looks_like_header(line)) continue;
      auto fields = split_line(line, ',');
      if (fields.size() < 2)
        throw ParseError(attributes_path + ":" + std::to_string(line_no) +
                         ": expected label,a1..am");
      if (m < 0) m = static_cast<Eigen::Index>(fields.size()) - 1;
      if (static_cast<Eigen::Index>(fields.size()) - 1 != m)
        throw ParseError(attributes_path + ":" + std::to_string(line_no) +
                         ": ragged row (expected " + std::to_string(m) +
                         " attributes)");
      ds.class_ids.push_back(parse_int(fields[0], attributes_path, line_no));
      std::vector<double> row;
      for (std::size_t j = 1; j < fields.size(); ++j)
        row.push_back(parse_double(fields[j], attributes_path, line_no));
      rows.push_back(std::move(row));
    }
    ds.attributes.resize(static_cast<Eigen::Index>(rows.size()), m);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        ds.attributes(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  {
    std::set<int> uniq(ds.class_ids.begin(), ds.class_ids.end());
    if (uniq.size() != ds.class_ids.size())
      throw SchemaError(attributes_path + ": duplicate class rows");
  }

  // features: instance_id,label,f1..fd
  {
    std::ifstream in(features_path);
    if (!in) throw Error("cannot open features file: " + features_path);
    std::string line;
    int line_no = 0;
    std::vector<std::vector<double>> rows;
    Eigen::Index d = -1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (line_no == 1 && looks_like_header(line)) continue;
      auto fields = split_line(line, ',');
      if (fields.size() < 3)
        throw ParseError(features_path + ":" + std::to_string(line_no) +
                         ": expected instance_id,label,f1..fd");
      if (d < 0) d = static_cast<Eigen::Index>(fields.size()) - 2;
      if (static_cast<Eigen::Index>(fields.size()) - 2 != d)
        throw ParseError(features_path + ":" + std::to_string(line_no) +
                         ": ragged row (expected " + std::to_string(d) + " features)");
      ds.instance_ids.push_back(parse_int(fields[0], features_path, line_no));
      ds.labels.push_back(parse_int(fields[1], features_path, line_no));
      std::vector<double> row;
      for (std::size_t j = 2; j < fields.size(); ++j)
        row.push_back(parse_double(fields[j], features_path, line_no));
      rows.push_back(std::move(row));
    }
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        ds.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }

  // splits JSON; ids are instance ids and get remapped to row positions
  {
    std::ifstream in(splits_path);
    if (!in) throw Error("cannot open splits file: " + splits_path);
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(splits_path + ": " + e.what());
    }
    std::unordered_map<int, int> id_to_row;
    for (std::size_t i = 0; i < ds.instance_ids.size(); ++i) {
      if (!id_to_row.emplace(ds.instance_ids[i], static_cast<int>(i)).second)
        throw SchemaError(features_path + ": duplicate instance id " +
                          std::to_string(ds.instance_ids[i]));
    }
    auto to_rows = [&](const nlohmann::json& arr, const std::string& name) {
      std::vector<int> out;
      for (const auto& v : arr) {
        const int id = v.get<int>();
        auto it = id_to_row.find(id);
        if (it == id_to_row.end())
          throw SchemaError(splits_path + ": split '" + name +
                            "' references nonexistent instance " + std::to_string(id));
        out.push_back(it->second);
      }
      return out;
    };
    for (auto& [key, value] : doc.items()) {
      if (key == "seen_classes")
        ds.seen_classes = value.get<std::vector<int>>();
      else if (key == "unseen_classes")
        ds.unseen_classes = value.get<std::vector<int>>();
      else if (key == "train")
        ds.splits.train = to_rows(value, key);
      else if (key == "val")
        ds.splits.val = to_rows(value, key);
      else if (key == "test_seen")
        ds.splits.test_seen = to_rows(value, key);
      else if (key == "test_unseen")
        ds.splits.test_unseen = to_rows(value, key);
      else
        ds.splits.extra[key] = to_rows(value, key);
    }
    std::sort(ds.seen_classes.begin(), ds.seen_classes.end());
    std::sort(ds.unseen_classes.begin(), ds.unseen_classes.end());
  }

  validate_dataset(ds);
  return ds;
}

void save_features_csv(const Matrix& features, const std::vector<int>& labels,
                       const std::vector<int>& instance_ids,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << "instance_id,label";
  for (Eigen::Index j = 0; j < features.cols(); ++j) out << ",f" << (j + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out << instance_ids[static_cast<std::size_t>(i)] << ","
        << labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < features.cols(); ++j)
      out << "," << fmt17(features(i, j));
    out << "\n";
  }
}

void save_dataset(const Dataset& ds, const std::string& features_path,
                  const std::string& attributes_path,
                  const std::string& splits_path) {
  save_features_csv(ds.features, ds.labels, ds.instance_ids, features_path);
  {
    std::ofstream out(attributes_path);
    if (!out) throw Error("cannot open for writing: " + attributes_path);
    out << "label";
    for (Eigen::Index j = 0; j < ds.attributes.cols(); ++j) out << ",a" << (j + 1);
    out << "\n";
    for (Eigen::Index i = 0; i < ds.attributes.rows(); ++i) {
      out << ds.class_ids[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < ds.attributes.cols(); ++j)
        out << "," << fmt17(ds.attributes(i, j));
      out << "\n";
    }
  }
  {
    nlohmann::json doc;
    auto to_ids = [&](const std::vector<int>& rows) {
      std::vector<int> ids;
      ids.reserve(rows.size());
      for (int r : rows) ids.push_back(ds.instance_ids[static_cast<std::size_t>(r)]);
      return ids;
    };
    doc["seen_classes"] = ds.seen_classes;
    doc["unseen_classes"] = ds.unseen_classes;
    doc["train"] = to_ids(ds.splits.train);
    doc["val"] = to_ids(ds.splits.val);
    doc["test_seen"] = to_ids(ds.splits.test_seen);
    doc["test_unseen"] = to_ids(ds.splits.test_unseen);
    for (const auto& [name, rows] : ds.splits.extra) doc[name] = to_ids(rows);
    std::ofstream out(splits_path);
    if (!out) throw Error("cannot open for writing: " + splits_path);
    out << doc.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

Matrix synthetic_mixing_matrix(const SyntheticSpec& spec) {
  spec.check();
  Rng rng(spec.map_seed);
  const Eigen::Index d = spec.feature_dim, m = spec.attribute_dim;
  // orthonormal factors with log-spaced gains: a mildly ill-conditioned map
  // keeps nearest-mean classification easy while attribute regression from
  // noisy instances stays lossy
  Matrix gu = rng.normal_matrix(d, m);
  Matrix gv = rng.normal_matrix(m, m);
  Eigen::HouseholderQR<Matrix> qru(gu);
  Matrix u = qru.householderQ() * Matrix::Identity(d, m);
  Eigen::HouseholderQR<Matrix> qrv(gv);
  Matrix v = qrv.householderQ() * Matrix::Identity(m, m);
  Vector gains(m);
  const double hi = 3.5, lo = 0.05;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double t = m == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(m - 1);
    gains(i) = hi * std::pow(lo / hi, t);
  }
  return u * gains.asDiagonal() * v.transpose();
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.check();
  const Matrix mix = synthetic_mixing_matrix(spec);
  Rng rng(spec.seed);

  Dataset ds;
  const int c_total = spec.seen_classes + spec.unseen_classes;
  ds.attributes = rng.normal_matrix(c_total, spec.attribute_dim);
  for (int c = 0; c < c_total; ++c) {
    ds.class_ids.push_back(c);
    if (c < spec.seen_classes)
      ds.seen_classes.push_back(c);
    else
      ds.unseen_classes.push_back(c);
  }

  const int n_total = c_total * spec.instances_per_class;
  ds.features.resize(n_total, spec.feature_dim);
  ds.labels.reserve(static_cast<std::size_t>(n_total));
  ds.instance_ids.reserve(static_cast<std::size_t>(n_total));

  int row = 0;
  for (int c = 0; c < c_total; ++c) {
    const Vector mean = mix * ds.attributes.row(c).transpose();
    for (int i = 0; i < spec.instances_per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < spec.feature_dim; ++j)
        ds.features(row, j) = mean(j) + spec.sigma_cls * rng.normal();
      ds.labels.push_back(c);
      ds.instance_ids.push_back(row);
    }
  }

  // per-class split proportions: seen 1/2 train, 1/6 val, rest test_seen;
  // unseen 1/3 support pool, rest test_unseen
  const int ipc = spec.instances_per_class;
  const int n_train = std::max(1, ipc / 2);
  const int n_val = std::max(1, ipc / 6);
  const int n_pool = std::max(1, ipc / 3);
  for (int c = 0; c < c_total; ++c) {
    const int base = c * ipc;
    if (c < spec.seen_classes) {
      for (int i = 0; i < ipc; ++i) {
        if (i < n_train)
          ds.splits.train.push_back(base + i);
        else if (i < n_train + n_val)
          ds.splits.val.push_back(base + i);
        else
          ds.splits.test_seen.push_back(base + i);
      }
    } else {
      for (int i = 0; i < ipc; ++i) {
        if (i < n_pool)
          ds.splits.extra["unseen_pool"].push_back(base + i);
        else
          ds.splits.test_unseen.push_back(base + i);
      }
    }
  }

  validate_dataset(ds);
  return ds;
}

Dataset standardize(const Dataset& ds) {
  if (ds.splits.train.empty())
    throw InvariantError("standardize: train split is empty");
  Dataset out = ds;

  const Eigen::Index n_tr = static_cast<Eigen::Index>(ds.splits.train.size());
  Matrix train(n_tr, ds.feature_dim());
  for (Eigen::Index i = 0; i < n_tr; ++i)
    train.row(i) = ds.features.row(ds.splits.train[static_cast<std::size_t>(i)]);

  const Eigen::RowVectorXd mean = train.colwise().mean();
  Eigen::RowVectorXd stddev(ds.feature_dim());
  for (Eigen::Index j = 0; j < ds.feature_dim(); ++j) {
    const double var = (train.col(j).array() - mean(j)).square().sum() /
                       static_cast<double>(n_tr);
    stddev(j) = std::sqrt(var);
  }
  for (Eigen::Index j = 0; j < ds.feature_dim(); ++j) {
    out.features.col(j).array() -= mean(j);
    if (stddev(j) > 0.0) out.features.col(j) /= stddev(j);  // zero-variance: shift only
  }
  for (Eigen::Index i = 0; i < out.attributes.rows(); ++i) {
    const double norm = out.attributes.row(i).norm();
    if (norm > 0.0) out.attributes.row(i) /= norm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

struct Check {
  std::string name;
  bool ok;
  std::string detail;
};

std::vector<Check> run_checks(const Dataset& ds) {
  std::vector<Check> checks;
  auto push = [&](std::string name, bool ok, std::string detail = "") {
    checks.push_back({std::move(name), ok, std::move(detail)});
  };

  // disjoint label spaces
  {
    std::vector<int> inter;
    std::set_intersection(ds.seen_classes.begin(), ds.seen_classes.end(),
                          ds.unseen_classes.begin(), ds.unseen_classes.end(),
                          std::back_inserter(inter));
    push("seen/unseen class sets are disjoint", inter.empty(),
         inter.empty() ? "" : "overlap of " + std::to_string(inter.size()) + " classes");
  }

  // every class is in exactly one domain and has an attribute row
  {
    bool all_assigned = true, all_attr = true;
    std::string detail;
    std::unordered_set<int> attr_classes(ds.class_ids.begin(), ds.class_ids.end());
    std::unordered_set<int> label_set(ds.labels.begin(), ds.labels.end());
    for (int c : label_set) {
      const bool seen = std::binary_search(ds.seen_classes.begin(), ds.seen_classes.end(), c);
      const bool unseen = std::binary_search(ds.unseen_classes.begin(), ds.unseen_classes.end(), c);
      if (seen == unseen) {
        all_assigned = false;
        detail = "class " + std::to_string(c);
      }
      if (!attr_classes.count(c)) {
        all_attr = false;
        detail = "class " + std::to_string(c) + " has no attribute row";
      }
    }
    push("every instance label belongs to exactly one domain", all_assigned, detail);
    push("every instance label has an attribute row", all_attr, detail);
  }

  // split indices in range
  {
    bool ok = true;
    auto check_split = [&](const std::vector<int>& split) {
      for (int idx : split)
        if (idx < 0 || idx >= ds.num_instances()) ok = false;
    };
    check_split(ds.splits.train);
    check_split(ds.splits.val);
    check_split(ds.splits.test_seen);
    check_split(ds.splits.test_unseen);
    for (const auto& [name, split] : ds.splits.extra) check_split(split);
    push("split indices are in range", ok);
  }

  // train split: seen instances plus optionally exactly K per unseen class
  {
    std::map<int, int> unseen_counts;
    bool seen_ok = true;
    for (int idx : ds.splits.train) {
      const int c = ds.labels[static_cast<std::size_t>(idx)];
      if (ds.is_unseen(c)) ++unseen_counts[c];
      else if (!ds.is_seen(c)) seen_ok = false;
    }
    bool fsl_ok = true;
    std::string detail;
    if (!unseen_counts.empty()) {
      const int k = unseen_counts.begin()->second;
      for (int c : ds.unseen_classes) {
        auto it = unseen_counts.find(c);
        if (it == unseen_counts.end() || it->second != k) fsl_ok = false;
      }
      detail = fsl_ok ? "few-shot support: " + std::to_string(k) + " per unseen class"
                      : "uneven unseen-class support counts in train split";
    }
    push("train split is seen-only or seen plus K-shot unseen support",
         seen_ok && fsl_ok, detail);
  }

  // domain purity of the test splits
  {
    bool ok = true;
    for (int idx : ds.splits.test_seen)
      if (!ds.is_seen(ds.labels[static_cast<std::size_t>(idx)])) ok = false;
    push("test_seen split holds only seen-class instances", ok);
    ok = true;
    for (int idx : ds.splits.test_unseen)
      if (!ds.is_unseen(ds.labels[static_cast<std::size_t>(idx)])) ok = false;
    push("test_unseen split holds only unseen-class instances", ok);
  }

  return checks;
}

}  // namespace

void validate_dataset(const Dataset& ds) {
  for (const auto& check : run_checks(ds)) {
    if (!check.ok) {
      if (check.name.find("disjoint") != std::string::npos ||
          check.name.find("train split") != std::string::npos)
        throw InvariantError(check.name + (check.detail.empty() ? "" : ": " + check.detail));
      throw SchemaError(check.name + (check.detail.empty() ? "" : ": " + check.detail));
    }
  }
}

std::string invariant_report(const Dataset& ds) {
  std::ostringstream os;
  os << "dataset: " << ds.num_instances() << " instances, " << ds.feature_dim()
     << "-dim features, " << ds.num_classes() << " classes ("
     << ds.seen_classes.size() << " seen + " << ds.unseen_classes.size()
     << " unseen), " << ds.attribute_dim() << "-dim attributes\n";
  os << "splits: train=" << ds.splits.train.size() << " val=" << ds.splits.val.size()
     << " test_seen=" << ds.splits.test_seen.size()
     << " test_unseen=" << ds.splits.test_unseen.size();
  for (const auto& [name, split] : ds.splits.extra)
    os << " " << name << "=" << split.size();
  os << "\n";
  for (const auto& check : run_checks(ds)) {
    os << (check.ok ? "[ok]   " : "[FAIL] ") << check.name;
    if (!check.detail.empty()) os << " (" << check.detail << ")";
    os << "\n";
  }
  return os.str();
}

Dataset with_fsl_support(const Dataset& ds, int k, std::uint64_t seed) {
  if (k <= 0) throw ConfigError("few-shot support size must be positive");
  auto it = ds.splits.extra.find("unseen_pool");
  if (it == ds.splits.extra.end())
    throw SchemaError("with_fsl_support: dataset has no 'unseen_pool' split");
  Dataset out = ds;
  auto& pool = out.splits.extra["unseen_pool"];
  Rng rng(seed);

  for (int c : ds.unseen_classes) {
    std::vector<int> candidates;
    for (int idx : pool)
      if (ds.labels[static_cast<std::size_t>(idx)] == c) candidates.push_back(idx);
    if (static_cast<int>(candidates.size()) < k)
      throw EpisodeError("with_fsl_support: class " + std::to_string(c) + " has only " +
                         std::to_string(candidates.size()) + " pool instances, need " +
                         std::to_string(k));
    auto chosen = rng.sample_without_replacement(candidates, static_cast<std::size_t>(k));
    std::sort(chosen.begin(), chosen.end());
    for (int idx : chosen) {
      out.splits.train.push_back(idx);
      pool.erase(std::remove(pool.begin(), pool.end(), idx), pool.end());
    }
  }
  validate_dataset(out);
  return out;
}

}  // namespace tgg
