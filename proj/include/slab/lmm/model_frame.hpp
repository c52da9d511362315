#pragma once

// Column-oriented regression input: one response, named numeric columns and
// named grouping factors, all of equal length.

#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"

namespace slab::lmm {

struct ModelFrame {
  std::vector<double> response;
  std::map<std::string, std::vector<double>> numeric;
  std::map<std::string, std::vector<std::string>> factors;

  std::size_t rows() const { return response.size(); }

  const std::vector<double>& column(const std::string& name) const {
    auto it = numeric.find(name);
    if (it == numeric.end())
      throw ValidationError(fmt::format("model frame has no numeric column '{}'", name));
    return it->second;
  }

  const std::vector<std::string>& factor(const std::string& name) const {
    auto it = factors.find(name);
    if (it == factors.end())
      throw ValidationError(fmt::format("model frame has no grouping factor '{}'", name));
    return it->second;
  }

  void validate() const {
    for (const auto& [name, col] : numeric)
      if (col.size() != rows())
        throw ShapeError(fmt::format("column '{}' has {} rows, response has {}", name, col.size(),
                                     rows()));
    for (const auto& [name, col] : factors)
      if (col.size() != rows())
        throw ShapeError(fmt::format("factor '{}' has {} rows, response has {}", name, col.size(),
                                     rows()));
  }

  /// Subset of rows, in the given order.
  ModelFrame select(const std::vector<std::size_t>& idx) const {
    ModelFrame out;
    for (auto i : idx) out.response.push_back(response.at(i));
    for (const auto& [name, col] : numeric) {
      auto& dst = out.numeric[name];
      for (auto i : idx) dst.push_back(col.at(i));
    }
    for (const auto& [name, col] : factors) {
      auto& dst = out.factors[name];
      for (auto i : idx) dst.push_back(col.at(i));
    }
    return out;
  }
};

}  // namespace slab::lmm
