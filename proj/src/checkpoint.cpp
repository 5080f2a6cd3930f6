#include "tgg/checkpoint.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace tgg {

namespace {

// 17 significant digits round-trip any IEEE double exactly.
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const ParamMap& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  // hand-rolled emission so every value is printed at 17 significant digits
  out << "{\n";
  bool first = true;
  for (const auto& [name, tensor] : params) {
    if (!first) out << ",\n";
    first = false;
    const Matrix& v = tensor.value();
    out << "  " << nlohmann::json(name).dump() << ": {\"shape\": [" << v.rows()
        << ", " << v.cols() << "], \"values\": [";
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        if (i != 0 || j != 0) out << ", ";
        out << format_double(v(i, j));
      }
    out << "]}";
  }
  out << "\n}\n";
  if (!out) throw Error("failed while writing checkpoint: " + path);
}

void load_checkpoint(const ParamMap& params, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  for (const auto& [name, tensor] : params) {
    if (!doc.contains(name))
      throw SchemaError("checkpoint is missing parameter '" + name + "'");
    const auto& entry = doc.at(name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const auto values = entry.at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != tensor.rows() || shape[1] != tensor.cols())
      throw SchemaError("checkpoint parameter '" + name + "' has wrong shape");
    if (static_cast<Eigen::Index>(values.size()) != tensor.rows() * tensor.cols())
      throw SchemaError("checkpoint parameter '" + name + "' has wrong value count");
    Matrix m(tensor.rows(), tensor.cols());
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = values[k++];
    const_cast<Tensor&>(tensor).set_value(std::move(m));
  }
}

}  // namespace tgg
