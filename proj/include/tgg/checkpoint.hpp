#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tgg/tensor.hpp"

namespace tgg {

/// Named parameters in a stable order.
using ParamMap = std::vector<std::pair<std::string, Tensor>>;

/// JSON document mapping parameter names to {shape, values}, values in
/// row-major order, serialized so that doubles round-trip exactly.
void save_checkpoint(const ParamMap& params, const std::string& path);

/// Loads values into the given parameters in place; every name must be
/// present with a matching shape.
void load_checkpoint(const ParamMap& params, const std::string& path);

}  // namespace tgg
