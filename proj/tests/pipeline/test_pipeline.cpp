#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "slab/pipeline/demo.hpp"
#include "slab/pipeline/manifest.hpp"

using namespace slab;
namespace fs = std::filesystem;
using pipeline::Json;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("slab_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

pipeline::DemoOptions small_demo() {
  pipeline::DemoOptions opt;
  opt.models_per_family = 2;
  opt.subjects = 6;
  opt.n400_items = 10;
  opt.reading_items = 3;
  opt.corpus_sentences = 10;
  return opt;
}

Json read_json(const fs::path& p) { return Json::parse(io::read_file(p.string())); }

fs::path write_json(const fs::path& p, const Json& j) {
  std::ofstream(p) << j.dump(2);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const fs::path& p) { return io::read_file(p.string()); }

/// A three-item stimulus file with one critical word per item, a matching
/// trial file and two engines sharing the demo vocabulary.
fs::path tiny_setup(const fs::path& dir, bool uniform) {
  const auto vocab = pipeline::detail::demo_vocabulary();
  write_text(dir / "vocab.txt", vocab.serialize());
  const int V = static_cast<int>(vocab.vocab_size());
  Json engines = Json::array();
  int k = 0;
  for (auto family : {lm::Family::transformer, lm::Family::mamba}) {
    auto cfg = pipeline::detail::demo_engine_config(family, V, 0);
    auto name = fmt::format("e{}", k++);
    lm::init_weights(cfg, 11, uniform ? lm::WeightInit::zero_projections : lm::WeightInit::random)
        .save((dir / (name + ".sbwt")).string());
    engines.push_back({{"name", name},
                       {"family", std::string(lm::to_string(family))},
                       {"config", pipeline::detail::engine_config_json(cfg)},
                       {"weights", name + ".sbwt"}});
  }
  write_text(dir / "stimuli.csv",
             "item,sentence,word_index,word,critical\n"
             "i1,1,1,the,0\ni1,1,2,dog,0\ni1,1,3,ran,1\n"
             "i2,1,1,a,0\ni2,1,2,cat,1\n"
             "i3,1,1,she,0\ni3,1,2,walked,0\ni3,1,3,slowly,1\n");
  write_text(dir / "trials.csv", "subject,item,word_index,response\n");
  write_text(dir / "corpus.txt", "the dog ran\nthe cat walked slowly\n");
  write_text(dir / "recipe.recipe",
             "dataset = tiny\nmetric = N400\ncontext = sentence-so-far\nfixed = surprisal\nrandom = (1 | subject)\n");
  Json cfg{{"vocabulary", "vocab.txt"},
           {"perplexity_corpus", "corpus.txt"},
           {"engines", engines},
           {"datasets", {{{"recipe", "recipe.recipe"}, {"trials", "trials.csv"}, {"stimuli", "stimuli.csv"}}}}};
  return write_json(dir / "config.json", cfg);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, LoadsDemoConfigAndResolvesPaths) {
  auto dir = fresh_dir("config");
  auto path = pipeline::write_demo(dir, small_demo());
  auto cfg = pipeline::load_run_config(path);
  EXPECT_EQ(cfg.engines.size(), 6u);
  EXPECT_EQ(cfg.datasets.size(), 4u);
  EXPECT_EQ(cfg.fdr_method, meta::FdrMethod::by);
  EXPECT_EQ(cfg.fdr_family, meta::FdrFamily::all);
  EXPECT_TRUE(cfg.engines[0].weights.is_absolute());
  EXPECT_EQ(cfg.datasets[0].group, "n400");
  EXPECT_EQ(cfg.datasets[2].group, "reading");
  // the demo override keeps the builtin fixed effects
  EXPECT_EQ(cfg.datasets[0].recipe.fixed_effects, corpus::builtin_recipe("federmeier2007").fixed_effects);
  EXPECT_EQ(cfg.datasets[0].recipe.random_formula(), "(1 | subject) + (1 | item)");
}

TEST(Config, ReportsEveryProblemAtOnce) {
  auto dir = fresh_dir("config_bad");
  auto j = read_json(pipeline::write_demo(dir, small_demo()));
  j["engines"][0]["weights"] = "nope.sbwt";
  j["engines"][1]["name"] = j["engines"][0]["name"];
  j["datasets"][0]["trials"] = "missing.csv";
  j["fdr"]["family"] = "none";
  try {
    pipeline::load_run_config(write_json(dir / "bad.json", j));
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("nope.sbwt"), std::string::npos) << msg;
    EXPECT_NE(msg.find("listed twice"), std::string::npos) << msg;
    EXPECT_NE(msg.find("missing.csv"), std::string::npos) << msg;
  }
  EXPECT_THROW(pipeline::parse_run_config("{not json", dir), ValidationError);
  EXPECT_THROW(pipeline::parse_run_config("{\"engines\": [], \"datasets\": [], \"workers\": 0}", dir),
               ValidationError);
}

TEST(Surprisal, OneRowPerCriticalWordAndEngine) {
  auto dir = fresh_dir("surprisal_rows");
  auto cfg = pipeline::load_run_config(tiny_setup(dir, false));
  auto report = pipeline::run_surprisal(cfg);
  EXPECT_TRUE(report.ok());
  auto records = corpus::parse_surprisal_csv(slurp(cfg.output_dir / pipeline::kSurprisalFile), "s");
  ASSERT_EQ(records.size(), 6u);
  EXPECT_EQ(records[0].engine, "e0");
  EXPECT_EQ(records[0].word, "ran");
  EXPECT_EQ(records[3].engine, "e1");
}

TEST(Surprisal, UniformEngineGivesLogVocabularyPerToken) {
  auto dir = fresh_dir("surprisal_uniform");
  auto cfg = pipeline::load_run_config(tiny_setup(dir, true));
  pipeline::run_surprisal(cfg);
  const double lnV = std::log(static_cast<double>(cfg.engines[0].config.vocab_size));
  for (const auto& r : corpus::parse_surprisal_csv(slurp(cfg.output_dir / pipeline::kSurprisalFile), "s")) {
    EXPECT_GE(r.tokens, 1u);
    EXPECT_NEAR(r.surprisal, static_cast<double>(r.tokens) * lnV, 1e-9) << r.word;
  }
}

TEST(Perplexity, UniformEngineGivesVocabularySizeAndIgnoresOrder) {
  auto dir = fresh_dir("perplexity");
  auto path = tiny_setup(dir, true);
  auto cfg = pipeline::load_run_config(path);
  // every corpus word is one piece: " the", " dog", ... after the first
  write_text(dir / "corpus.txt", " the dog ran the cat walked slowly");
  EXPECT_TRUE(pipeline::run_perplexity(cfg).ok());
  auto table = io::read_csv((cfg.output_dir / pipeline::kPerplexityFile).string());
  ASSERT_EQ(table.rows.size(), 2u);
  for (const auto& row : table.rows) {
    EXPECT_EQ(row[1], row[2]);  // words == tokens
    EXPECT_NEAR(std::stod(row[4]), cfg.engines[0].config.vocab_size, 1e-6);
  }
  auto j = read_json(path);
  std::swap(j["engines"][0], j["engines"][1]);
  auto swapped = pipeline::load_run_config(write_json(dir / "swapped.json", j));
  swapped.output_dir = dir / "swapped";
  pipeline::run_perplexity(swapped);
  auto other = io::read_csv((swapped.output_dir / pipeline::kPerplexityFile).string());
  EXPECT_EQ(other.rows[0], table.rows[1]);
  EXPECT_EQ(other.rows[1], table.rows[0]);
}

TEST(Perplexity, EmptyCorpusIsAFailure) {
  auto dir = fresh_dir("perplexity_empty");
  auto cfg = pipeline::load_run_config(tiny_setup(dir, true));
  write_text(dir / "corpus.txt", "  \n");
  auto report = pipeline::run_perplexity(cfg);
  EXPECT_EQ(report.failures.size(), 2u);
}

TEST(Fit, OneRowPerDatasetAndEngine) {
  auto dir = fresh_dir("fit_rows");
  auto j = read_json(pipeline::write_demo(dir, small_demo()));
  j["engines"] = Json::array({j["engines"][0], j["engines"][2]});
  j["datasets"].erase(3);
  j["analysis_modes"] = {"scale"};
  auto cfg = pipeline::load_run_config(write_json(dir / "two.json", j));
  pipeline::run_surprisal(cfg);
  auto report = pipeline::run_fit(cfg);
  EXPECT_TRUE(report.ok());
  auto table = io::read_csv((cfg.output_dir / pipeline::kAicFile).string());
  ASSERT_EQ(table.rows.size(), 6u);
  for (const auto& row : table.rows) EXPECT_EQ(row[*table.column("status")], "ok");
}

TEST(Fit, RequiresSurprisalTable) {
  auto dir = fresh_dir("fit_closure");
  auto cfg = pipeline::load_run_config(pipeline::write_demo(dir, small_demo()));
  EXPECT_THROW(pipeline::run_fit(cfg), ValidationError);
  EXPECT_THROW(pipeline::run_meta(cfg), ValidationError);
}

TEST(Meta, SingleArchitectureRosterIsRejectedWithDiagnostic) {
  auto dir = fresh_dir("meta_single");
  auto j = read_json(pipeline::write_demo(dir, small_demo()));
  for (auto& e : j["engines"]) e["architecture"] = "pythia";
  j["analysis_modes"] = {"scale"};
  auto cfg = pipeline::load_run_config(write_json(dir / "single.json", j));
  pipeline::run_surprisal(cfg);
  pipeline::run_fit(cfg);
  auto report = pipeline::run_meta(cfg);
  ASSERT_EQ(report.failures.size(), cfg.datasets.size());
  EXPECT_NE(report.failures[0].message.find("constant"), std::string::npos) << report.failures[0].message;
}

TEST(Meta, PerplexityTableFeedsRegressionUnchanged) {
  auto dir = fresh_dir("meta_identity");
  auto cfg = pipeline::load_run_config(pipeline::write_demo(dir, small_demo()));
  auto reports = pipeline::run_pipeline(cfg);
  ASSERT_EQ(pipeline::exit_code(reports), pipeline::ExitCode::success);
  // recompute the perplexity-mode regression straight from the stage files
  auto ppl = io::read_csv((cfg.output_dir / pipeline::kPerplexityFile).string());
  auto aic = io::read_csv((cfg.output_dir / pipeline::kAicFile).string());
  std::vector<meta::ModelMeta> roster;
  for (const auto& e : cfg.engines) {
    meta::ModelMeta m{e.name, e.architecture, e.param_count, {}};
    for (const auto& r : ppl.rows)
      if (r[0] == e.name) m.perplexity = std::stod(r[4]);
    roster.push_back(m);
  }
  std::vector<meta::AicObservation> obs;
  for (const auto& r : aic.rows) obs.push_back({r[0], r[1], std::stod(r[5])});
  auto opt = cfg.meta_options(meta::Mode::perplexity);
  auto rows = meta::meta_regression(obs, roster, opt);
  auto table = io::read_csv((cfg.output_dir / pipeline::meta_file(meta::Mode::perplexity)).string());
  ASSERT_EQ(table.rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(table.rows[i][0], rows[i].dataset_id);
    EXPECT_EQ(table.rows[i][1], rows[i].predictor);
    EXPECT_EQ(table.rows[i][4], io::format_number(rows[i].t));
    EXPECT_EQ(table.rows[i][5], "2");
  }
}

TEST(Plot, EmptyDatasetListGivesEmptyFiguresWithWarning) {
  auto dir = fresh_dir("plot_empty");
  auto j = read_json(pipeline::write_demo(dir, small_demo()));
  j["datasets"] = Json::array();
  auto cfg = pipeline::load_run_config(write_json(dir / "empty.json", j));
  auto reports = pipeline::run_pipeline(cfg);
  EXPECT_EQ(pipeline::exit_code(reports), pipeline::ExitCode::success);
  const auto& plot = reports.back();
  EXPECT_EQ(plot.stage, "plot");
  EXPECT_EQ(plot.outputs.size(), 4u);
  EXPECT_EQ(plot.warnings.size(), 4u);
  auto svg = slurp(cfg.output_dir / pipeline::figure_file(meta::Mode::scale, "n400"));
  EXPECT_EQ(svg.find("class=\"panel\""), std::string::npos);
}

TEST(Plot, OnePanelPerDataset) {
  pipeline::Figure fig{"t", "x", {}};
  for (int i = 0; i < 6; ++i)
    fig.panels.push_back({fmt::format("d{}", i), "", {{meta::Architecture::mamba, "m", 1.0 + i, 2.0}}});
  auto svg = pipeline::render_svg(fig);
  std::size_t panels = 0;
  for (auto p = svg.find("class=\"panel\""); p != std::string::npos; p = svg.find("class=\"panel\"", p + 1)) ++panels;
  EXPECT_EQ(panels, 6u);
  EXPECT_EQ(pipeline::render_svg(fig), svg);
}

TEST(Pipeline, PartialFailureLeavesOtherDatasetsIntact) {
  auto dir = fresh_dir("partial");
  auto path = pipeline::write_demo(dir, small_demo());
  auto clean = pipeline::load_run_config(path);
  clean.output_dir = dir / "clean";
  pipeline::run_pipeline(clean);

  write_text(dir / "data/wlotko2012/trials.csv", "subject,item,word_index\nS01,s01,3\n");
  auto broken = pipeline::load_run_config(path);
  broken.output_dir = dir / "broken";
  auto reports = pipeline::run_pipeline(broken);
  pipeline::update_manifest(broken, reports);
  EXPECT_EQ(pipeline::exit_code(reports), pipeline::ExitCode::partial);

  auto a = io::read_csv((clean.output_dir / pipeline::kAicFile).string());
  auto b = io::read_csv((broken.output_dir / pipeline::kAicFile).string());
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (a.rows[i][0] == "wlotko2012") {
      EXPECT_EQ(b.rows[i][10], "failed");
    } else {
      EXPECT_EQ(a.rows[i], b.rows[i]);
    }
  }
  auto manifest = read_json(broken.output_dir / pipeline::kManifestFile);
  EXPECT_EQ(manifest["stages"]["fit"]["status"], "partial");
  EXPECT_EQ(manifest["stages"]["fit"]["datasets"]["wlotko2012"], "failed");
  EXPECT_EQ(manifest["stages"]["fit"]["datasets"]["federmeier2007"], "ok");
}

TEST(Pipeline, ByteIdenticalAcrossRunsAndWorkerCounts) {
  auto dir = fresh_dir("determinism");
  auto path = pipeline::write_demo(dir, small_demo());
  std::map<std::string, std::string> reference;
  for (unsigned workers : {1u, 8u, 1u, 8u}) {
    auto cfg = pipeline::load_run_config(path);
    cfg.workers = workers;
    cfg.output_dir = dir / fmt::format("out{}", workers);
    fs::remove_all(cfg.output_dir);
    auto reports = pipeline::run_pipeline(cfg);
    ASSERT_EQ(pipeline::exit_code(reports), pipeline::ExitCode::success);
    for (const auto& r : reports)
      for (const auto& file : r.outputs) {
        auto bytes = slurp(cfg.output_dir / file);
        auto [it, inserted] = reference.emplace(file, bytes);
        if (!inserted) {
          EXPECT_EQ(it->second, bytes) << file << " workers " << workers;
        }
      }
  }
  // surprisal, perplexity, aic, exclusions, two meta tables, four figures
  EXPECT_EQ(reference.size(), 10u);
}

TEST(Cli, ExitCodes) {
  auto dir = fresh_dir("cli");
  ASSERT_EQ(run_cli(fmt::format("init-demo --out {} --models-per-family 2", dir.string())), 0);
  const auto config = (dir / "config.json").string();
  EXPECT_EQ(run_cli(fmt::format("pipeline --config {} --workers 2", config)), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / pipeline::kManifestFile));
  EXPECT_EQ(run_cli(fmt::format("meta --config {} --out {}", config, (dir / "elsewhere").string())), 1);
  EXPECT_EQ(run_cli("fit --config /does/not/exist.json"), 1);
  EXPECT_EQ(run_cli("no-such-command"), 1);
  write_text(dir / "data/smith2013/trials.csv", "subject\n");
  EXPECT_EQ(run_cli(fmt::format("pipeline --config {} --out {}", config, (dir / "partial").string())), 2);
  EXPECT_EQ(run_cli(fmt::format("recipes export {}", (dir / "recipes").string())), 0);
  EXPECT_TRUE(fs::exists(dir / "recipes" / "federmeier2007.recipe"));
  EXPECT_EQ(run_cli(fmt::format("init-weights --family rwkv --vocab-size 300 --d-model 8 --layers 1 --out {}",
                                (dir / "w.sbwt").string())),
            0);
  EXPECT_NO_THROW(lm::load_weights((dir / "w.sbwt").string(), lm::EngineConfig::rwkv(300, 8, 1)));
}
