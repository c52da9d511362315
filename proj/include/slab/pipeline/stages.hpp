#pragma once

// Pipeline stages. Each stage reads the files the previous stage wrote into
// the output directory and writes its own; failures are scoped to a
// dataset or engine and never touch other rows.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "slab/corpus/analysis.hpp"
#include "slab/corpus/stimuli.hpp"
#include "slab/corpus/trials.hpp"
#include "slab/io/csv.hpp"
#include "slab/io/hash.hpp"
#include "slab/lm/engine.hpp"
#include "slab/lm/surprisal.hpp"
#include "slab/lm/token.hpp"
#include "slab/lmm/fit.hpp"
#include "slab/meta/meta.hpp"
#include "slab/pipeline/config.hpp"
#include "slab/pipeline/pool.hpp"
#include "slab/pipeline/svg.hpp"

namespace slab::pipeline {

inline constexpr const char* kSurprisalFile = "surprisal.csv";
inline constexpr const char* kPerplexityFile = "perplexity.csv";
inline constexpr const char* kExclusionFile = "exclusions.csv";
inline constexpr const char* kAicFile = "aic.csv";

inline std::string meta_file(meta::Mode m) { return fmt::format("meta_{}.csv", meta::to_string(m)); }

inline std::string figure_file(meta::Mode m, std::string_view group) {
  return fmt::format("figure_{}_{}.svg", meta::to_string(m), group);
}

struct StageFailure {
  std::string dataset;  ///< empty when the failure is not dataset-scoped
  std::string engine;   ///< empty when the failure is not engine-scoped
  std::string message;
};

struct StageReport {
  std::string stage;
  std::vector<std::string> outputs = {};  ///< file names inside the output directory
  std::vector<StageFailure> failures = {};
  std::vector<std::string> warnings = {};
  double seconds = 0.0;

  bool ok() const { return failures.empty(); }
};

namespace detail {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void write_output(const RunConfig& cfg, StageReport& report, const std::string& name,
                         const std::string& content) {
  fs::create_directories(cfg.output_dir);
  std::ofstream f(cfg.output_dir / name, std::ios::binary);
  if (!f) throw ValidationError(fmt::format("cannot write '{}'", (cfg.output_dir / name).string()));
  f << content;
  report.outputs.push_back(name);
}

/// Reads a stage-boundary table and checks its columns.
inline io::CsvTable read_stage_table(const RunConfig& cfg, const std::string& name,
                                     const std::vector<std::string>& columns, std::string_view producer) {
  const auto path = cfg.output_dir / name;
  if (!fs::is_regular_file(path))
    throw ValidationError(
        fmt::format("missing input '{}'; run `slab {}` first", path.string(), producer));
  auto table = io::read_csv(path.string());
  for (const auto& c : columns) table.require_column(c, path.string());
  return table;
}

/// Per-task seed that depends only on the run seed and the task identity.
inline std::uint64_t task_seed(std::uint64_t seed, std::string_view a, std::string_view b) {
  std::uint64_t h = io::fnv1a64(std::string_view(reinterpret_cast<const char*>(&seed), sizeof seed));
  h = io::fnv1a64(a, h);
  h = io::fnv1a64("\x1f", h);
  return io::fnv1a64(b, h);
}

struct LoadedEngine {
  std::optional<lm::Engine> engine;
  std::optional<lm::Vocabulary> vocab;
};

inline std::vector<LoadedEngine> load_engines(const RunConfig& cfg, StageReport& report) {
  std::vector<LoadedEngine> out(cfg.engines.size());
  auto errors = parallel_for(cfg.engines.size(), cfg.workers, [&](std::size_t i) {
    const auto& e = cfg.engines[i];
    auto vocab = lm::Vocabulary::load(e.vocabulary.string());
    if (vocab.vocab_size() != static_cast<std::size_t>(e.config.vocab_size))
      throw ValidationError(fmt::format("vocabulary '{}' has {} ids but the engine expects {}",
                                        e.vocabulary.string(), vocab.vocab_size(), e.config.vocab_size));
    out[i].engine = lm::load_weights(e.weights.string(), e.config);
    out[i].vocab = std::move(vocab);
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (errors[i]) report.failures.push_back({"", cfg.engines[i].name, *errors[i]});
  return out;
}

/// Critical words only, or every word when the item marks none.
inline std::vector<corpus::SurprisalRecord> keep_critical(const corpus::StimulusItem& item,
                                                          std::vector<corpus::SurprisalRecord> records) {
  bool any = false;
  for (const auto& w : item.words) any |= w.critical;
  if (!any) return records;
  std::map<long long, bool> critical;
  for (const auto& w : item.words) critical[w.word_index] = w.critical;
  std::erase_if(records, [&](const auto& r) { return !critical[r.word_index]; });
  return records;
}

inline std::string aggregate(const std::vector<std::string>& messages) {
  std::map<std::string, std::size_t> counts;
  for (const auto& m : messages) ++counts[m];
  std::vector<std::string> parts;
  for (const auto& [m, c] : counts) parts.push_back(c > 1 ? fmt::format("{} (x{})", m, c) : m);
  return fmt::format("{} failure(s): {}", messages.size(), fmt::join(parts, "; "));
}

}  // namespace detail

/// Word surprisal for every (dataset, item, critical word, engine).
inline StageReport run_surprisal(const RunConfig& cfg) {
  detail::Timer timer;
  StageReport report{"surprisal"};
  auto engines = detail::load_engines(cfg, report);

  std::vector<std::vector<corpus::StimulusItem>> items(cfg.datasets.size());
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    const auto& ds = cfg.datasets[d];
    try {
      items[d] = corpus::load_stimuli(ds.stimuli.string(), ds.id());
    } catch (const Error& e) {
      report.failures.push_back({ds.id(), "", e.what()});
    }
  }

  struct Task {
    std::size_t dataset, engine, item;
  };
  std::vector<Task> tasks;
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d)
    for (std::size_t e = 0; e < engines.size(); ++e)
      if (engines[e].engine)
        for (std::size_t i = 0; i < items[d].size(); ++i) tasks.push_back({d, e, i});

  std::vector<std::vector<corpus::SurprisalRecord>> results(tasks.size());
  auto errors = parallel_for(tasks.size(), cfg.workers, [&](std::size_t t) {
    const auto [d, e, i] = tasks[t];
    const auto& item = items[d][i];
    results[t] = detail::keep_critical(
        item, corpus::item_surprisals(*engines[e].engine, *engines[e].vocab, item,
                                      cfg.datasets[d].recipe.context, cfg.engines[e].name));
  });

  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::string>> failed;
  std::vector<corpus::SurprisalRecord> records;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (errors[t]) {
      failed[{tasks[t].dataset, tasks[t].engine}].push_back(*errors[t]);
      continue;
    }
    records.insert(records.end(), results[t].begin(), results[t].end());
  }
  for (const auto& [key, msgs] : failed)
    report.failures.push_back(
        {cfg.datasets[key.first].id(), cfg.engines[key.second].name, detail::aggregate(msgs)});
  detail::write_output(cfg, report, kSurprisalFile, corpus::surprisal_csv(records));
  report.seconds = timer.seconds();
  return report;
}

/// Word-level perplexity of each engine on its configured corpus.
inline StageReport run_perplexity(const RunConfig& cfg) {
  detail::Timer timer;
  StageReport report{"perplexity"};
  auto engines = detail::load_engines(cfg, report);
  std::vector<std::optional<lm::PerplexityResult>> results(cfg.engines.size());
  auto errors = parallel_for(cfg.engines.size(), cfg.workers, [&](std::size_t e) {
    if (!engines[e].engine) return;
    const auto& entry = cfg.engines[e];
    if (entry.perplexity_corpus.empty())
      throw ValidationError("no perplexity corpus configured");
    results[e] = lm::word_level_perplexity(*engines[e].engine, *engines[e].vocab,
                                           io::read_file(entry.perplexity_corpus.string()));
  });
  io::CsvWriter w({"engine", "words", "tokens", "total_nats", "perplexity"});
  for (std::size_t e = 0; e < cfg.engines.size(); ++e) {
    if (errors[e]) report.failures.push_back({"", cfg.engines[e].name, *errors[e]});
    if (!results[e]) continue;
    const auto& r = *results[e];
    w.row({cfg.engines[e].name, std::to_string(r.words), std::to_string(r.tokens),
           io::format_number(r.total_nats), io::format_number(r.perplexity)});
  }
  detail::write_output(cfg, report, kPerplexityFile, w.str());
  report.seconds = timer.seconds();
  return report;
}

struct AicRow {
  std::string dataset;
  std::string engine;
  bool ok = false;
  lmm::LmmFit fit = {};
  double surprisal_estimate = 0.0;
  double surprisal_se = 0.0;
  std::string message = {};
};

/// One mixed model per (dataset, engine) on the recipe's trials.
inline StageReport run_fit(const RunConfig& cfg) {
  detail::Timer timer;
  StageReport report{"fit"};
  const auto surprisal_path = cfg.output_dir / kSurprisalFile;
  detail::read_stage_table(cfg, kSurprisalFile, {"dataset", "item", "word_index", "word", "engine",
                                                 "surprisal", "tokens"},
                           "surprisal");
  const auto records =
      corpus::parse_surprisal_csv(io::read_file(surprisal_path.string()), surprisal_path.string());

  std::vector<std::optional<std::vector<corpus::TrialRow>>> trials(cfg.datasets.size());
  std::vector<std::string> dataset_error(cfg.datasets.size());
  io::CsvWriter excl({"dataset", "rule", "rows_matched", "input_rows", "retained_rows"});
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    const auto& ds = cfg.datasets[d];
    try {
      auto rows = corpus::load_trials(ds.trials.string(), corpus::TrialSchema::for_recipe(ds.recipe));
      corpus::ExclusionReport ex;
      trials[d] = corpus::apply_exclusions(rows, ds.recipe, &ex);
      for (std::size_t r = 0; r < ex.per_rule.size(); ++r)
        excl.row({ds.id(), ex.per_rule[r].first, std::to_string(ex.per_rule[r].second),
                  std::to_string(ex.input_rows), std::to_string(ex.input_rows - ex.excluded_rows)});
    } catch (const Error& e) {
      dataset_error[d] = e.what();
      report.failures.push_back({ds.id(), "", e.what()});
    }
  }

  std::vector<AicRow> rows;
  for (const auto& ds : cfg.datasets)
    for (const auto& e : cfg.engines) rows.push_back({ds.id(), e.name});
  auto errors = parallel_for(rows.size(), cfg.workers, [&](std::size_t t) {
    const std::size_t d = t / cfg.engines.size();
    const auto& ds = cfg.datasets[d];
    auto& row = rows[t];
    if (!trials[d]) throw ValidationError("dataset could not be loaded: " + dataset_error[d]);
    std::vector<corpus::SurprisalRecord> mine;
    for (const auto& r : records)
      if (r.dataset_id == ds.id() && r.engine == row.engine) mine.push_back(r);
    auto table = corpus::transform_response(
        corpus::attach_surprisal(*trials[d], mine, ds.recipe, row.engine), ds.recipe);
    auto design = lmm::build_design(corpus::to_model_frame(table), corpus::fixed_spec(ds.recipe),
                                    corpus::random_terms(ds.recipe));
    lmm::FitOptions opt;
    opt.criterion = cfg.criterion;
    opt.restarts = cfg.restarts;
    opt.seed = detail::task_seed(cfg.seed, ds.id(), row.engine);
    row.fit = lmm::fit_lmm(design, opt);
    for (std::size_t j = 0; j < row.fit.fixed_names.size(); ++j)
      if (row.fit.fixed_names[j] == corpus::DatasetRecipe::kSurprisal) {
        row.surprisal_estimate = row.fit.beta(static_cast<Eigen::Index>(j));
        row.surprisal_se = row.fit.beta_se(static_cast<Eigen::Index>(j));
      }
    row.ok = true;
  });

  io::CsvWriter w({"dataset", "engine", "n", "k", "loglik", "aic", "surprisal_estimate", "surprisal_se",
                   "converged", "singular", "status", "message"});
  for (std::size_t t = 0; t < rows.size(); ++t) {
    auto& r = rows[t];
    if (errors[t]) {
      r.message = *errors[t];
      if (trials[t / cfg.engines.size()]) report.failures.push_back({r.dataset, r.engine, r.message});
      w.row({r.dataset, r.engine, "", "", "", "", "", "", "", "", "failed", r.message});
      continue;
    }
    if (!r.fit.converged)
      report.warnings.push_back(fmt::format("{} / {}: optimizer did not converge", r.dataset, r.engine));
    w.row({r.dataset, r.engine, std::to_string(r.fit.n), std::to_string(r.fit.k),
           io::format_number(r.fit.loglik), io::format_number(r.fit.aic),
           io::format_number(r.surprisal_estimate), io::format_number(r.surprisal_se),
           r.fit.converged ? "1" : "0", r.fit.singular ? "1" : "0", "ok", ""});
  }
  detail::write_output(cfg, report, kAicFile, w.str());
  detail::write_output(cfg, report, kExclusionFile, excl.str());
  report.seconds = timer.seconds();
  return report;
}

namespace detail {

struct AicTable {
  std::vector<meta::AicObservation> observations;  ///< successful fits only
  std::vector<std::string> failed;                 ///< "dataset / engine"
};

inline AicTable read_aic(const RunConfig& cfg) {
  auto table = read_stage_table(cfg, kAicFile, {"dataset", "engine", "aic", "status"}, "fit");
  const auto src = (cfg.output_dir / kAicFile).string();
  const auto ds = *table.column("dataset"), en = *table.column("engine"), aic = *table.column("aic"),
             st = *table.column("status");
  AicTable out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row[st] != "ok") {
      out.failed.push_back(row[ds] + " / " + row[en]);
      continue;
    }
    out.observations.push_back({row[ds], row[en], io::parse_double(row[aic], src, r + 2, "aic")});
  }
  return out;
}

inline std::map<std::string, double> read_perplexity(const RunConfig& cfg) {
  auto table = read_stage_table(cfg, kPerplexityFile, {"engine", "perplexity"}, "perplexity");
  const auto src = (cfg.output_dir / kPerplexityFile).string();
  std::map<std::string, double> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    out[table.rows[r][*table.column("engine")]] =
        io::parse_double(table.rows[r][*table.column("perplexity")], src, r + 2, "perplexity");
  return out;
}

/// Roster for the meta-regression: configured names and architectures,
/// nominal parameter counts (or the archive's), measured perplexities.
inline std::vector<meta::ModelMeta> roster(const RunConfig& cfg,
                                           const std::map<std::string, double>& perplexity) {
  std::vector<meta::ModelMeta> out;
  for (const auto& e : cfg.engines) {
    meta::ModelMeta m{e.name, e.architecture, e.param_count, {}};
    if (m.param_count == 0) m.param_count = lm::WeightArchive::load(e.weights.string()).total_elements();
    if (auto it = perplexity.find(e.name); it != perplexity.end()) m.perplexity = it->second;
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

/// Per-dataset meta-regressions for every configured mode, FDR-corrected
/// over the configured family.
inline StageReport run_meta(const RunConfig& cfg) {
  detail::Timer timer;
  StageReport report{"meta"};
  const auto aic = detail::read_aic(cfg);
  std::map<std::string, double> ppl;
  if (cfg.has_mode(meta::Mode::perplexity)) ppl = detail::read_perplexity(cfg);
  const auto models = detail::roster(cfg, ppl);

  std::map<meta::Mode, std::vector<meta::MetaResultRow>> results;
  for (auto mode : cfg.modes) {
    auto opt = cfg.meta_options(mode);
    auto& rows = results[mode];
    for (const auto& ds : cfg.datasets) {
      std::vector<meta::AicObservation> obs;
      for (const auto& o : aic.observations)
        if (o.dataset_id == ds.id()) obs.push_back(o);
      if (obs.empty()) {
        report.failures.push_back({ds.id(), "", fmt::format("{} mode: no successful fits", meta::to_string(mode))});
        continue;
      }
      try {
        auto part = meta::meta_regression(obs, models, opt);
        rows.insert(rows.end(), part.begin(), part.end());
      } catch (const Error& e) {
        report.failures.push_back({ds.id(), "", fmt::format("{} mode: {}", meta::to_string(mode), e.what())});
      }
    }
    meta::apply_fdr(rows, opt);
  }
  if (cfg.fdr_family == meta::FdrFamily::all) {
    std::vector<meta::MetaResultRow> pooled;
    for (auto mode : cfg.modes) pooled.insert(pooled.end(), results[mode].begin(), results[mode].end());
    meta::apply_fdr(pooled, cfg.meta_options(cfg.modes.front()));
    std::size_t k = 0;
    for (auto mode : cfg.modes)
      for (auto& r : results[mode]) r = pooled[k++];
  }
  for (auto mode : cfg.modes) detail::write_output(cfg, report, meta_file(mode), meta::meta_csv(results[mode]));
  report.seconds = timer.seconds();
  return report;
}

/// AIC curves per dataset, one figure per analysis mode and dataset group.
inline StageReport run_plot(const RunConfig& cfg) {
  detail::Timer timer;
  StageReport report{"plot"};
  const auto aic = detail::read_aic(cfg);
  std::map<std::string, double> ppl;
  if (cfg.has_mode(meta::Mode::perplexity)) ppl = detail::read_perplexity(cfg);
  const auto models = detail::roster(cfg, ppl);

  for (auto mode : cfg.modes) {
    auto table = detail::read_stage_table(cfg, meta_file(mode), {"Dataset", "Predictor", "t", "p_adjusted"},
                                          "meta");
    std::map<std::string, std::string> subtitle;
    const auto name = std::string(meta::predictor_name(mode));
    for (const auto& r : table.rows)
      if (r[*table.column("Predictor")] == name)
        subtitle[r[*table.column("Dataset")]] =
            fmt::format("{}: t = {}, adj. p = {}", name,
                        fmt::format("{:.2f}", std::stod(r[*table.column("t")])),
                        fmt::format("{:.4f}", std::stod(r[*table.column("p_adjusted")])));
    for (std::string group : {"n400", "reading"}) {
      Figure fig;
      fig.title = fmt::format("{} AIC by {}", group == "n400" ? "N400" : "Reading time",
                              mode == meta::Mode::scale ? "model scale" : "perplexity");
      fig.x_label = mode == meta::Mode::scale ? "ln(parameters)" : "-ln(word-level perplexity)";
      for (const auto& ds : cfg.datasets) {
        if (ds.group != group) continue;
        PlotPanel panel{ds.recipe.label, subtitle.count(ds.id()) ? subtitle[ds.id()] : "", {}};
        for (const auto& o : aic.observations) {
          if (o.dataset_id != ds.id()) continue;
          for (const auto& m : models) {
            if (m.name != o.model) continue;
            if (mode == meta::Mode::perplexity && !m.perplexity) continue;
            panel.points.push_back({m.architecture, m.name,
                                    mode == meta::Mode::scale ? m.scale() : m.neg_log_ppl(), o.aic});
          }
        }
        fig.panels.push_back(std::move(panel));
      }
      if (fig.panels.empty())
        report.warnings.push_back(fmt::format("{}: no {} datasets configured; figure is empty",
                                              figure_file(mode, group), group));
      detail::write_output(cfg, report, figure_file(mode, group), render_svg(fig));
    }
  }
  report.seconds = timer.seconds();
  return report;
}

}  // namespace slab::pipeline
