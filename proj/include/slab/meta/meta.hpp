#pragma once

// Per-dataset meta-regressions of AIC on architecture and scale (or
// perplexity), with z-scoring and false-discovery-rate correction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"
#include "slab/io/csv.hpp"
#include "slab/lmm/ols.hpp"

namespace slab::meta {

enum class Architecture { pythia, rwkv, mamba };
enum class Mode { scale, perplexity };
enum class FdrMethod { bh, by };
/// `table`: every row of one analysis mode; `all`: every row of every mode
/// (the caller pools the modes); `group`: N400 vs reading-time datasets
/// within a mode; `dataset`: the four rows of each regression.
enum class FdrFamily { table, all, group, dataset };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::pythia: return "pythia";
    case Architecture::rwkv: return "rwkv";
    case Architecture::mamba: return "mamba";
  }
  return "?";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "pythia" || s == "transformer") return Architecture::pythia;
  if (s == "rwkv") return Architecture::rwkv;
  if (s == "mamba") return Architecture::mamba;
  throw ValidationError(fmt::format("unknown architecture '{}'", s));
}

inline std::string_view to_string(FdrFamily f) {
  switch (f) {
    case FdrFamily::table: return "table";
    case FdrFamily::all: return "all";
    case FdrFamily::group: return "group";
    case FdrFamily::dataset: return "dataset";
  }
  return "?";
}

inline std::string_view to_string(FdrMethod m) { return m == FdrMethod::bh ? "BH" : "BY"; }

inline std::string_view to_string(Mode m) { return m == Mode::scale ? "scale" : "perplexity"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "scale") return Mode::scale;
  if (s == "perplexity") return Mode::perplexity;
  throw ValidationError(fmt::format("unknown analysis mode '{}'", s));
}

inline FdrMethod parse_fdr_method(std::string_view s) {
  if (s == "BH" || s == "bh") return FdrMethod::bh;
  if (s == "BY" || s == "by") return FdrMethod::by;
  throw ValidationError(fmt::format("unknown FDR method '{}'", s));
}

inline FdrFamily parse_fdr_family(std::string_view s) {
  if (s == "table") return FdrFamily::table;
  if (s == "all") return FdrFamily::all;
  if (s == "group") return FdrFamily::group;
  if (s == "dataset") return FdrFamily::dataset;
  throw ValidationError(fmt::format("unknown FDR family '{}'", s));
}

struct ModelMeta {
  std::string name;
  Architecture architecture = Architecture::pythia;
  std::int64_t param_count = 0;
  std::optional<double> perplexity;  ///< word-level

  double scale() const { return std::log(static_cast<double>(param_count)); }

  double neg_log_ppl() const {
    if (!perplexity) throw ValidationError(fmt::format("model '{}' has no perplexity", name));
    return -std::log(*perplexity);
  }
};

/// The fourteen evaluated models with their exact parameter counts.
inline std::vector<ModelMeta> canonical_roster() {
  using A = Architecture;
  return {
      {"RWKV-169M", A::rwkv, 169342464, {}},     {"RWKV-430M", A::rwkv, 430397440, {}},
      {"RWKV-1.5B", A::rwkv, 1515106304, {}},    {"RWKV-3B", A::rwkv, 2984627200, {}},
      {"Pythia-160M", A::pythia, 162322944, {}}, {"Pythia-410M", A::pythia, 405334016, {}},
      {"Pythia-1B", A::pythia, 1011781632, {}},  {"Pythia-1.4B", A::pythia, 1414647808, {}},
      {"Pythia-2.8B", A::pythia, 2775208960, {}}, {"Mamba-130M", A::mamba, 129135360, {}},
      {"Mamba-370M", A::mamba, 371516416, {}},   {"Mamba-790M", A::mamba, 793204224, {}},
      {"Mamba-1.4B", A::mamba, 1372178432, {}},  {"Mamba-2.8B", A::mamba, 2768345600, {}},
  };
}

struct AicObservation {
  std::string dataset_id;
  std::string model;
  double aic = 0.0;
};

struct MetaResultRow {
  std::string dataset_id;
  std::string predictor;
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  std::size_t df = 0;
  double p_uncorrected = 1.0;
  double p_adjusted = 1.0;
  bool perfect_fit = false;
};

/// Standardizes with the sample (n − 1) standard deviation.
inline std::vector<double> zscore(const std::vector<double>& x) {
  if (x.size() < 2) throw ValidationError("z-scoring needs at least two values");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
    throw ValidationError("cannot z-score a constant column");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / sd;
  return out;
}

struct ArchitectureColumns {
  std::vector<double> mamba;
  std::vector<double> rwkv;
};

/// Dummy coding against the pythia reference.
inline ArchitectureColumns encode_architecture(const std::vector<ModelMeta>& rows) {
  ArchitectureColumns cols;
  for (const auto& r : rows) {
    cols.mamba.push_back(r.architecture == Architecture::mamba ? 1.0 : 0.0);
    cols.rwkv.push_back(r.architecture == Architecture::rwkv ? 1.0 : 0.0);
  }
  return cols;
}

/// Step-up adjusted p values (Benjamini-Hochberg, or Benjamini-Yekutieli
/// with the harmonic factor), clipped to 1.
inline std::vector<double> fdr_adjust(const std::vector<double>& p, FdrMethod method = FdrMethod::bh) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(fmt::format("p value {} is outside [0, 1]", v));
  const std::size_t m = p.size();
  if (m == 0) return {};
  double c = 1.0;
  if (method == FdrMethod::by) {
    c = 0.0;
    for (std::size_t i = 1; i <= m; ++i) c += 1.0 / static_cast<double>(i);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double k = static_cast<double>(r + 1);
    running = std::min(running, std::min(1.0, p[order[r]] * static_cast<double>(m) * c / k));
    adj[order[r]] = running;
  }
  return adj;
}

struct MetaOptions {
  Mode mode = Mode::scale;
  bool standardize_indicators = true;
  FdrMethod fdr_method = FdrMethod::bh;
  FdrFamily fdr_family = FdrFamily::table;
  std::map<std::string, std::string> dataset_group;  ///< used by FdrFamily::group
};

inline std::string_view predictor_name(Mode m) { return m == Mode::scale ? "Scale" : "Perplexity"; }

namespace detail {

inline std::vector<MetaResultRow> regress_dataset(const std::string& dataset,
                                                  const std::vector<const ModelMeta*>& models,
                                                  const std::vector<double>& aic,
                                                  const MetaOptions& opt) {
  const std::size_t n = models.size();
  if (n < 6)
    throw ValidationError(fmt::format("dataset '{}': meta-regression needs at least 6 models, got {}",
                                      dataset, n));
  std::vector<ModelMeta> rows;
  std::vector<double> x;
  for (const auto* m : models) {
    rows.push_back(*m);
    x.push_back(opt.mode == Mode::scale ? m->scale() : m->neg_log_ppl());
  }
  auto arch = encode_architecture(rows);
  if (opt.standardize_indicators) {
    arch.mamba = zscore(arch.mamba);
    arch.rwkv = zscore(arch.rwkv);
  }
  const auto zx = zscore(x);
  const auto zy = zscore(aic);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 4);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    X(r, 1) = arch.mamba[i];
    X(r, 2) = arch.rwkv[i];
    X(r, 3) = zx[i];
    y(r) = zy[i];
  }
  lmm::OlsFit fit;
  try {
    fit = lmm::fit_ols(X, y, {"Intercept", "Mamba", "RWKV", std::string(predictor_name(opt.mode))});
  } catch (const NumericError& e) {
    throw ValidationError(fmt::format("dataset '{}': {}", dataset, e.what()));
  }
  std::vector<MetaResultRow> out;
  for (Eigen::Index j = 0; j < 4; ++j)
    out.push_back({dataset, fit.names[static_cast<std::size_t>(j)], fit.estimate(j), fit.se(j),
                   fit.t(j), fit.df, fit.p(j), fit.p(j), fit.perfect_fit});
  return out;
}

}  // namespace detail

/// Fills p_adjusted over the configured family.
inline void apply_fdr(std::vector<MetaResultRow>& rows, const MetaOptions& opt) {
  std::map<std::string, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string key;
    switch (opt.fdr_family) {
      case FdrFamily::table:
      case FdrFamily::all: key = ""; break;
      case FdrFamily::dataset: key = rows[i].dataset_id; break;
      case FdrFamily::group: {
        auto it = opt.dataset_group.find(rows[i].dataset_id);
        if (it == opt.dataset_group.end())
          throw ValidationError(
              fmt::format("dataset '{}' has no FDR group assignment", rows[i].dataset_id));
        key = it->second;
        break;
      }
    }
    families[key].push_back(i);
  }
  for (const auto& [key, idx] : families) {
    std::vector<double> p;
    for (auto i : idx) p.push_back(rows[i].p_uncorrected);
    auto adj = fdr_adjust(p, opt.fdr_method);
    for (std::size_t k = 0; k < idx.size(); ++k) rows[idx[k]].p_adjusted = adj[k];
  }
}

/// One OLS per dataset (in order of first appearance), then FDR correction.
inline std::vector<MetaResultRow> meta_regression(const std::vector<AicObservation>& obs,
                                                  const std::vector<ModelMeta>& roster,
                                                  const MetaOptions& opt = {}) {
  std::map<std::string, const ModelMeta*> by_name;
  for (const auto& m : roster) {
    if (m.param_count <= 0)
      throw ValidationError(fmt::format("model '{}' has a non-positive parameter count", m.name));
    if (!by_name.emplace(m.name, &m).second)
      throw ValidationError(fmt::format("model '{}' appears twice in the roster", m.name));
  }
  std::vector<std::string> datasets;
  std::map<std::string, std::map<std::string, double>> aic;
  for (const auto& o : obs) {
    if (!by_name.count(o.model))
      throw ValidationError(fmt::format("dataset '{}': model '{}' is not in the roster", o.dataset_id, o.model));
    if (!aic.count(o.dataset_id)) datasets.push_back(o.dataset_id);
    if (!aic[o.dataset_id].emplace(o.model, o.aic).second)
      throw ValidationError(
          fmt::format("dataset '{}': duplicate AIC for model '{}'", o.dataset_id, o.model));
  }
  std::vector<MetaResultRow> rows;
  for (const auto& ds : datasets) {
    const auto& values = aic[ds];
    std::vector<std::string> missing;
    std::vector<const ModelMeta*> models;
    std::vector<double> y;
    for (const auto& m : roster) {
      auto it = values.find(m.name);
      if (it == values.end()) {
        missing.push_back(m.name);
        continue;
      }
      models.push_back(&m);
      y.push_back(it->second);
    }
    if (!missing.empty())
      throw ValidationError(fmt::format("dataset '{}': incomplete roster, missing {}", ds,
                                        fmt::join(missing, ", ")));
    auto part = detail::regress_dataset(ds, models, y, opt);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  apply_fdr(rows, opt);
  return rows;
}

inline std::string meta_csv(const std::vector<MetaResultRow>& rows) {
  io::CsvWriter w({"Dataset", "Predictor", "Estimate", "SE", "t", "df", "p_uncorrected", "p_adjusted"});
  for (const auto& r : rows)
    w.row({r.dataset_id, r.predictor, io::format_number(r.estimate), io::format_number(r.se),
           io::format_number(r.t), std::to_string(r.df), io::format_number(r.p_uncorrected),
           io::format_number(r.p_adjusted)});
  return w.str();
}

}  // namespace slab::meta
