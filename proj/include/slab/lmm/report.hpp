#pragma once

// Plain-text fit report: sectioned `key = value` records.

#include <string>

#include <fmt/format.h>

#include "slab/io/csv.hpp"
#include "slab/lmm/fit.hpp"

namespace slab::lmm {

inline std::string fit_report(const LmmFit& fit, std::string_view title = {}) {
  using io::format_number;
  std::string out;
  if (!title.empty()) out += fmt::format("# {}\n", title);
  out += "[fit]\n";
  out += fmt::format("criterion = {}\n", to_string(fit.criterion));
  out += fmt::format("n = {}\np = {}\nk = {}\n", fit.n, fit.p, fit.k);
  out += fmt::format("loglik = {}\n", format_number(fit.loglik));
  out += fmt::format("aic = {}\n", format_number(fit.aic));
  out += fmt::format("sigma2 = {}\n", format_number(fit.sigma2));
  out += fmt::format("converged = {}\nsingular = {}\n", fit.converged, fit.singular);
  out += "[beta]\n";
  for (std::size_t i = 0; i < fit.fixed_names.size(); ++i)
    out += fmt::format("{} = {}\n", fit.fixed_names[i],
                       format_number(fit.beta(static_cast<Eigen::Index>(i))));
  out += "[variance]\n";
  for (const auto& v : fit.variance) {
    if (v.group == "Residual")
      out += fmt::format("Residual = {}\n", format_number(v.value));
    else if (v.first == v.second)
      out += fmt::format("{} {} = {}\n", v.group, v.first, format_number(v.value));
    else
      out += fmt::format("{} {}:{} = {}\n", v.group, v.first, v.second, format_number(v.value));
  }
  out += "[theta]\n";
  for (std::size_t i = 0; i < fit.theta.size(); ++i)
    out += fmt::format("{} = {}\n", i, format_number(fit.theta[i]));
  if (!fit.warnings.empty()) {
    out += "[warnings]\n";
    for (const auto& w : fit.warnings) out += w + "\n";
  }
  return out;
}

}  // namespace slab::lmm
