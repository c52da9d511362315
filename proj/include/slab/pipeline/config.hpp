#pragma once

// Run configuration: engine roster, dataset roster, analysis settings. Read
// from JSON; relative paths resolve against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "slab/corpus/builtin_recipes.hpp"
#include "slab/error.hpp"
#include "slab/io/csv.hpp"
#include "slab/io/hash.hpp"
#include "slab/lm/config.hpp"
#include "slab/lmm/deviance.hpp"
#include "slab/meta/meta.hpp"

namespace slab::pipeline {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct EngineEntry {
  std::string name;
  lm::EngineConfig config;
  meta::Architecture architecture = meta::Architecture::pythia;
  std::int64_t param_count = 0;  ///< 0 = count the archive's weights
  fs::path weights;
  fs::path vocabulary;
  fs::path perplexity_corpus;  ///< empty = none
};

struct DatasetEntry {
  std::string recipe_ref;  ///< builtin id or recipe file
  corpus::DatasetRecipe recipe;
  fs::path trials;
  fs::path stimuli;
  std::string group;  ///< "n400" or "reading"

  const std::string& id() const { return recipe.dataset_id; }
};

struct RunConfig {
  std::vector<EngineEntry> engines;
  std::vector<DatasetEntry> datasets;
  std::vector<meta::Mode> modes{meta::Mode::scale, meta::Mode::perplexity};
  meta::FdrMethod fdr_method = meta::FdrMethod::bh;
  meta::FdrFamily fdr_family = meta::FdrFamily::table;
  bool standardize_indicators = true;
  lmm::Criterion criterion = lmm::Criterion::reml;
  int restarts = 3;
  fs::path output_dir = "out";
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string source_hash;  ///< FNV-1a of the config bytes

  const EngineEntry& engine(const std::string& name) const {
    for (const auto& e : engines)
      if (e.name == name) return e;
    throw ValidationError(fmt::format("engine '{}' is not configured", name));
  }

  bool has_mode(meta::Mode m) const {
    return std::find(modes.begin(), modes.end(), m) != modes.end();
  }

  meta::MetaOptions meta_options(meta::Mode mode) const {
    meta::MetaOptions opt;
    opt.mode = mode;
    opt.standardize_indicators = standardize_indicators;
    opt.fdr_method = fdr_method;
    opt.fdr_family = fdr_family;
    for (const auto& d : datasets) opt.dataset_group[d.id()] = d.group;
    return opt;
  }
};

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline lm::EngineConfig parse_engine_config(const Json& j, lm::Family family) {
  const int vocab = j.at("vocab_size").get<int>();
  const int d = j.at("d_model").get<int>();
  const int layers = j.at("n_layers").get<int>();
  lm::EngineConfig c;
  switch (family) {
    case lm::Family::transformer:
      c = lm::EngineConfig::transformer(vocab, d, layers, get_or(j, "n_heads", 4));
      break;
    case lm::Family::rwkv: c = lm::EngineConfig::rwkv(vocab, d, layers, get_or(j, "ffn_size", 0)); break;
    case lm::Family::mamba: {
      c = lm::EngineConfig::mamba(vocab, d, layers, get_or(j, "state_size", 16));
      auto& m = std::get<lm::MambaParams>(c.family_params);
      m.expand = get_or(j, "expand", m.expand);
      m.conv_kernel = get_or(j, "conv_kernel", m.conv_kernel);
      m.dt_rank = get_or(j, "dt_rank", m.dt_rank);
      break;
    }
  }
  c.validate();
  return c;
}

inline Json engine_config_json(const lm::EngineConfig& c) {
  Json j{{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_layers", c.n_layers}};
  switch (c.family) {
    case lm::Family::transformer: j["n_heads"] = c.transformer_params().n_heads; break;
    case lm::Family::rwkv: j["ffn_size"] = std::get<lm::RwkvParams>(c.family_params).ffn_size; break;
    case lm::Family::mamba: {
      const auto& m = c.mamba_params();
      j["state_size"] = m.state_size;
      j["expand"] = m.expand;
      j["conv_kernel"] = m.conv_kernel;
      j["dt_rank"] = m.dt_rank;
      break;
    }
  }
  return j;
}

inline meta::Architecture default_architecture(lm::Family f) {
  switch (f) {
    case lm::Family::transformer: return meta::Architecture::pythia;
    case lm::Family::rwkv: return meta::Architecture::rwkv;
    case lm::Family::mamba: return meta::Architecture::mamba;
  }
  return meta::Architecture::pythia;
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

inline void require_file(const fs::path& p, std::string_view what, std::vector<std::string>& errors) {
  if (!fs::is_regular_file(p)) errors.push_back(fmt::format("{} '{}' does not exist", what, p.string()));
}

}  // namespace detail

/// Parses a config document. `base` anchors relative paths. Every problem is
/// collected and reported in one ValidationError.
inline RunConfig parse_run_config(std::string_view text, const fs::path& base,
                                  std::string_view source = "<config>") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("{}: invalid JSON: {}", source, e.what()));
  }
  RunConfig cfg;
  cfg.source_hash = io::hex_digest(text);
  std::vector<std::string> errors;
  try {
    const std::string default_vocab = detail::get_or<std::string>(j, "vocabulary", "");
    const std::string default_corpus = detail::get_or<std::string>(j, "perplexity_corpus", "");
    std::set<std::string> names;
    for (const auto& e : j.at("engines")) {
      EngineEntry entry;
      entry.name = e.at("name").get<std::string>();
      if (!names.insert(entry.name).second)
        errors.push_back(fmt::format("engine '{}' is listed twice", entry.name));
      const auto family = lm::parse_family(e.at("family").get<std::string>());
      entry.config = detail::parse_engine_config(e.at("config"), family);
      entry.architecture = e.contains("architecture")
                               ? meta::parse_architecture(e.at("architecture").get<std::string>())
                               : detail::default_architecture(family);
      entry.param_count = detail::get_or<std::int64_t>(e, "param_count", 0);
      entry.weights = detail::resolve(base, e.at("weights").get<std::string>());
      const auto vocab = detail::get_or<std::string>(e, "vocabulary", default_vocab);
      if (vocab.empty()) errors.push_back(fmt::format("engine '{}' has no vocabulary", entry.name));
      else entry.vocabulary = detail::resolve(base, vocab);
      const auto corpus = detail::get_or<std::string>(e, "perplexity_corpus", default_corpus);
      if (!corpus.empty()) entry.perplexity_corpus = detail::resolve(base, corpus);
      detail::require_file(entry.weights, "weights", errors);
      if (!entry.vocabulary.empty()) detail::require_file(entry.vocabulary, "vocabulary", errors);
      if (!entry.perplexity_corpus.empty())
        detail::require_file(entry.perplexity_corpus, "perplexity corpus", errors);
      cfg.engines.push_back(std::move(entry));
    }
    std::set<std::string> ids;
    for (const auto& d : j.at("datasets")) {
      DatasetEntry entry;
      entry.recipe_ref = d.at("recipe").get<std::string>();
      std::string ref = entry.recipe_ref;
      bool builtin = false;
      for (const auto& id : corpus::builtin_recipe_ids()) builtin |= id == ref;
      if (!builtin) ref = detail::resolve(base, ref).string();
      try {
        entry.recipe = corpus::resolve_recipe(ref);
      } catch (const Error& ex) {
        errors.push_back(ex.what());
        continue;
      }
      if (!ids.insert(entry.id()).second)
        errors.push_back(fmt::format("dataset '{}' is listed twice", entry.id()));
      entry.trials = detail::resolve(base, d.at("trials").get<std::string>());
      entry.stimuli = detail::resolve(base, d.at("stimuli").get<std::string>());
      entry.group = detail::get_or<std::string>(d, "group",
                                                corpus::is_n400(entry.recipe.metric) ? "n400" : "reading");
      if (entry.group != "n400" && entry.group != "reading")
        errors.push_back(fmt::format("dataset '{}': group must be n400 or reading", entry.id()));
      detail::require_file(entry.trials, "trial file", errors);
      detail::require_file(entry.stimuli, "stimuli file", errors);
      cfg.datasets.push_back(std::move(entry));
    }
    if (j.contains("analysis_modes")) {
      cfg.modes.clear();
      for (const auto& m : j.at("analysis_modes")) cfg.modes.push_back(meta::parse_mode(m.get<std::string>()));
    }
    if (j.contains("fdr")) {
      const auto& f = j.at("fdr");
      if (f.contains("method")) cfg.fdr_method = meta::parse_fdr_method(f.at("method").get<std::string>());
      if (f.contains("family")) cfg.fdr_family = meta::parse_fdr_family(f.at("family").get<std::string>());
    }
    cfg.standardize_indicators = detail::get_or(j, "standardize_indicators", true);
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      const auto crit = detail::get_or<std::string>(f, "criterion", "REML");
      if (crit == "REML") cfg.criterion = lmm::Criterion::reml;
      else if (crit == "ML") cfg.criterion = lmm::Criterion::ml;
      else errors.push_back(fmt::format("unknown fit criterion '{}'", crit));
      cfg.restarts = detail::get_or(f, "restarts", cfg.restarts);
      if (cfg.restarts < 0) errors.push_back("fit.restarts must be non-negative");
    }
    cfg.output_dir = detail::resolve(base, detail::get_or<std::string>(j, "output_dir", "out"));
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    cfg.workers = detail::get_or<unsigned>(j, "workers", 1);
  } catch (const Json::exception& e) {
    errors.push_back(fmt::format("malformed field: {}", e.what()));
  } catch (const ValidationError& e) {
    errors.push_back(e.what());
  }
  if (cfg.workers == 0) errors.push_back("workers must be at least 1");
  if (!errors.empty())
    throw ValidationError(fmt::format("{}: {} problem(s):\n  {}", source, errors.size(),
                                      fmt::join(errors, "\n  ")));
  return cfg;
}

inline RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(io::read_file(path.string()), path.parent_path(), path.string());
}

}  // namespace slab::pipeline
