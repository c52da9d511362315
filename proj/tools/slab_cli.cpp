// slab: surprisal evaluation pipeline.
//
//   slab pipeline --config demo/config.json
//   slab surprisal|perplexity|fit|meta|plot --config <path> [--out dir] [--seed n] [--workers n]
//   slab init-demo --out demo
//   slab init-weights --family mamba --vocab-size 300 --d-model 16 --layers 2 --out w.sbwt
//   slab recipes list|show <id>|export <dir>

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "slab/corpus/builtin_recipes.hpp"
#include "slab/pipeline/demo.hpp"
#include "slab/pipeline/manifest.hpp"

namespace {

using namespace slab;

struct RunFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", f.seed, "Seed (overrides the config)");
  cmd->add_option("--workers", f.workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
}

pipeline::RunConfig load(const RunFlags& f) {
  auto cfg = pipeline::load_run_config(f.config);
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  return cfg;
}

int report(const pipeline::RunConfig& cfg, const std::vector<pipeline::StageReport>& reports) {
  pipeline::update_manifest(cfg, reports);
  for (const auto& r : reports) {
    fmt::print("{}: {} ({:.2f} s)\n", r.stage, pipeline::stage_status(r), r.seconds);
    for (const auto& o : r.outputs) fmt::print("  wrote {}\n", (cfg.output_dir / o).string());
    for (const auto& w : r.warnings) fmt::print(stderr, "  warning: {}\n", w);
    for (const auto& e : r.failures)
      fmt::print(stderr, "  failed [{}{}{}]: {}\n", e.dataset, e.dataset.empty() || e.engine.empty() ? "" : " / ",
                 e.engine, e.message);
  }
  return static_cast<int>(pipeline::exit_code(reports));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surprisal evaluation of transformer and recurrent language models against human data"};
  app.require_subcommand(1);

  RunFlags flags;
  std::function<int()> action;
  using Stage = std::function<std::vector<pipeline::StageReport>(const pipeline::RunConfig&)>;
  auto stage = [&](const char* name, const char* help, Stage run) {
    auto* cmd = app.add_subcommand(name, help);
    add_run_flags(cmd, flags);
    cmd->callback([&, run] {
      action = [&, run] {
        auto cfg = load(flags);
        return report(cfg, run(cfg));
      };
    });
  };
  stage("surprisal", "Word surprisal of every critical word under every engine",
        [](const auto& c) { return std::vector{pipeline::run_surprisal(c)}; });
  stage("perplexity", "Word-level perplexity of every engine",
        [](const auto& c) { return std::vector{pipeline::run_perplexity(c)}; });
  stage("fit", "Mixed-effects regressions and AIC per dataset and engine",
        [](const auto& c) { return std::vector{pipeline::run_fit(c)}; });
  stage("meta", "Meta-regressions of AIC on architecture and scale or perplexity",
        [](const auto& c) { return std::vector{pipeline::run_meta(c)}; });
  stage("plot", "SVG figures of AIC by scale and perplexity",
        [](const auto& c) { return std::vector{pipeline::run_plot(c)}; });
  stage("pipeline", "Run every stage", [](const auto& c) { return pipeline::run_pipeline(c); });

  std::string demo_out = "demo";
  pipeline::DemoOptions demo;
  auto* init_demo = app.add_subcommand("init-demo", "Write synthetic demo inputs and a config");
  init_demo->add_option("--out", demo_out, "Demo directory")->capture_default_str();
  init_demo->add_option("--seed", demo.seed, "Seed")->capture_default_str();
  init_demo->add_option("--models-per-family", demo.models_per_family, "Roster size per family (0 = all)");
  init_demo->callback([&] {
    action = [&] {
      fmt::print("wrote {}\n", pipeline::write_demo(demo_out, demo).string());
      return 0;
    };
  });

  std::string family = "transformer", weights_out;
  int vocab = 0, d_model = 16, layers = 2;
  std::uint64_t weight_seed = 0;
  bool uniform = false;
  auto* init_weights = app.add_subcommand("init-weights", "Write a random-weight archive");
  init_weights->add_option("--family", family, "transformer, rwkv or mamba")->capture_default_str();
  init_weights->add_option("--vocab-size", vocab, "Vocabulary size")->required();
  init_weights->add_option("--d-model", d_model, "Model width")->capture_default_str();
  init_weights->add_option("--layers", layers, "Layer count")->capture_default_str();
  init_weights->add_option("--seed", weight_seed, "Seed")->capture_default_str();
  init_weights->add_flag("--uniform", uniform, "Zero every matrix (uniform next-token distribution)");
  init_weights->add_option("--out", weights_out, "Archive path")->required();
  init_weights->callback([&] {
    action = [&] {
      const auto f = lm::parse_family(family);
      lm::EngineConfig cfg = f == lm::Family::transformer ? lm::EngineConfig::transformer(vocab, d_model, layers, 4)
                             : f == lm::Family::rwkv      ? lm::EngineConfig::rwkv(vocab, d_model, layers)
                                                          : lm::EngineConfig::mamba(vocab, d_model, layers);
      auto archive = lm::init_weights(cfg, weight_seed,
                                      uniform ? lm::WeightInit::zero_projections : lm::WeightInit::random);
      archive.save(weights_out);
      fmt::print("wrote {} ({} parameters)\n", weights_out, archive.total_elements());
      return 0;
    };
  });

  std::string recipe_id, export_dir;
  auto* recipes = app.add_subcommand("recipes", "Inspect the shipped dataset recipes");
  recipes->require_subcommand(1);
  recipes->add_subcommand("list", "List recipe ids")->callback([&] {
    action = [] {
      for (const auto& r : corpus::builtin_recipes()) fmt::print("{}\t{}\n", r.dataset_id, r.label);
      return 0;
    };
  });
  auto* show = recipes->add_subcommand("show", "Print one recipe, or the manifest of all");
  show->add_option("id", recipe_id, "Recipe id (omit for all)");
  show->callback([&] {
    action = [&] {
      fmt::print("{}", recipe_id.empty() ? corpus::recipe_manifest()
                                         : corpus::builtin_recipe(recipe_id).describe());
      return 0;
    };
  });
  auto* exp = recipes->add_subcommand("export", "Write every recipe as <id>.recipe");
  exp->add_option("dir", export_dir, "Target directory")->required();
  exp->callback([&] {
    action = [&] {
      corpus::export_builtin_recipes(export_dir);
      fmt::print("wrote {} recipes to {}\n", corpus::builtin_recipe_ids().size(), export_dir);
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(pipeline::ExitCode::validation);
  }
  try {
    return action();
  } catch (const slab::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(pipeline::ExitCode::validation);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(pipeline::ExitCode::validation);
  }
}
