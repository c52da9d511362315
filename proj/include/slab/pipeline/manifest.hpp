#pragma once

// Run manifest: config hash, per-stage outputs with content hashes, timings
// and per-dataset status. Stage commands merge into an existing manifest.

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "slab/pipeline/stages.hpp"

namespace slab::pipeline {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kVersion = "0.1.0";

enum class ExitCode { success = 0, validation = 1, partial = 2 };

inline std::string stage_status(const StageReport& r) { return r.ok() ? "ok" : "partial"; }

inline Json stage_json(const RunConfig& cfg, const StageReport& r) {
  Json outputs = Json::array();
  for (const auto& name : r.outputs)
    outputs.push_back({{"file", name}, {"fnv1a64", io::hex_digest(io::read_file((cfg.output_dir / name).string()))}});
  Json failures = Json::array();
  for (const auto& f : r.failures)
    failures.push_back({{"dataset", f.dataset}, {"engine", f.engine}, {"message", f.message}});
  Json datasets = Json::object();
  for (const auto& ds : cfg.datasets) {
    std::string status = "ok";
    for (const auto& f : r.failures)
      if (f.dataset == ds.id() || (f.dataset.empty() && !f.engine.empty())) status = "failed";
    datasets[ds.id()] = status;
  }
  return {{"status", stage_status(r)}, {"seconds", r.seconds}, {"outputs", outputs},
          {"datasets", datasets},      {"failures", failures},   {"warnings", r.warnings}};
}

/// Merges stage reports into `<out>/manifest.json`.
inline void update_manifest(const RunConfig& cfg, const std::vector<StageReport>& reports) {
  const auto path = cfg.output_dir / kManifestFile;
  Json m;
  if (fs::is_regular_file(path)) {
    try {
      m = Json::parse(io::read_file(path.string()));
    } catch (const Json::exception&) {
      m = Json::object();
    }
  }
  if (!m.is_object() || m.value("config_hash", "") != cfg.source_hash) m = Json::object();
  m["tool"] = "slab";
  m["version"] = kVersion;
  m["config_hash"] = cfg.source_hash;
  m["seed"] = cfg.seed;
  m["workers"] = cfg.workers;
  if (!m.contains("stages")) m["stages"] = Json::object();
  for (const auto& r : reports) m["stages"][r.stage] = stage_json(cfg, r);
  fs::create_directories(cfg.output_dir);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  f << m.dump(2) << '\n';
}

inline ExitCode exit_code(const std::vector<StageReport>& reports) {
  for (const auto& r : reports)
    if (!r.ok()) return ExitCode::partial;
  return ExitCode::success;
}

/// All stages in order: surprisal, perplexity (when needed), fit, meta, plot.
inline std::vector<StageReport> run_pipeline(const RunConfig& cfg) {
  std::vector<StageReport> reports;
  reports.push_back(run_surprisal(cfg));
  if (cfg.has_mode(meta::Mode::perplexity)) reports.push_back(run_perplexity(cfg));
  reports.push_back(run_fit(cfg));
  reports.push_back(run_meta(cfg));
  reports.push_back(run_plot(cfg));
  return reports;
}

}  // namespace slab::pipeline
