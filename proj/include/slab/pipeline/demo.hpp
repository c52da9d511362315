#pragma once

// Deterministic synthetic inputs for a complete pipeline run: vocabulary,
// random-weight engines, stimuli, trials, a perplexity corpus, recipe
// overrides and a config. Responses are generated from a blend of the
// engines' own surprisals that weights larger models more, so larger models
// fit better by construction.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "slab/corpus/stimuli.hpp"
#include "slab/io/csv.hpp"
#include "slab/io/hash.hpp"
#include "slab/lm/engine.hpp"
#include "slab/lm/weights.hpp"
#include "slab/meta/meta.hpp"
#include "slab/pipeline/config.hpp"

namespace slab::pipeline {

struct DemoOptions {
  std::uint64_t seed = 7;
  int models_per_family = 0;  ///< 0 = the full 14-model roster
  int subjects = 12;
  int n400_items = 24;
  int reading_items = 6;  ///< passages of three sentences
  int corpus_sentences = 60;
  unsigned workers = 1;
};

namespace detail {

inline const std::vector<std::string>& demo_words() {
  static const std::vector<std::string> words{
      "the",   "a",     "dog",    "cat",    "bird",   "house", "river", "saw",   "found", "gave",
      "old",   "small", "bright", "quiet",  "near",   "under", "and",   "then",  "she",   "he",
      "they",  "walked", "ran",   "slowly", "today",  "tree",  "stone", "light", "road",  "boat",
      "child", "bread", "letter", "window", "garden", "music", "morning", "happy", "cold", "green"};
  return words;
}

inline lm::Vocabulary demo_vocabulary() {
  std::vector<std::string> pieces;
  for (const auto& w : demo_words()) pieces.push_back(" " + w);
  // subword pieces so some words split into several tokens
  for (std::string p : {"ing", "ed", "s", " un", " re", "er", "ly", "th", "ow", "ar"}) pieces.push_back(p);
  return lm::Vocabulary(std::move(pieces));
}

/// Tiny architectures whose width grows with the model's rank in its family.
inline lm::EngineConfig demo_engine_config(lm::Family family, int vocab, int rank) {
  static constexpr int widths[] = {8, 12, 16, 20, 24};
  const int d = widths[std::min(rank, 4)];
  switch (family) {
    case lm::Family::transformer: return lm::EngineConfig::transformer(vocab, d, 1 + rank / 2, 2);
    case lm::Family::rwkv: return lm::EngineConfig::rwkv(vocab, d, 1 + rank / 2, 2 * d);
    case lm::Family::mamba: return lm::EngineConfig::mamba(vocab, d, 1 + rank / 2, 4);
  }
  return {};
}

inline lm::Family family_of(meta::Architecture a) {
  switch (a) {
    case meta::Architecture::pythia: return lm::Family::transformer;
    case meta::Architecture::rwkv: return lm::Family::rwkv;
    case meta::Architecture::mamba: return lm::Family::mamba;
  }
  return lm::Family::transformer;
}

inline std::string sentence(std::mt19937_64& rng, int min_len, int max_len) {
  const auto& words = demo_words();
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  const int n = len(rng);
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " " : "") + words[pick(rng)];
  return s;
}

inline void save_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  f << text;
}

inline double word_frequency(const std::string& w) {
  const auto& words = demo_words();
  auto it = std::find(words.begin(), words.end(), w);
  return -std::log(1.0 + static_cast<double>(it - words.begin()));
}

}  // namespace detail

struct DemoDataset {
  std::string id;
  bool n400 = false;
  std::string random;  ///< override of the builtin random structure
};

inline std::vector<DemoDataset> demo_datasets() {
  return {{"federmeier2007", true, "(1 | subject) + (1 | item)"},
          {"wlotko2012", true, "(1 | subject) + (1 | item)"},
          {"futrell2021", false, "(1 | subject) + (1 | sentence)"},
          {"smith2013", false, "(1 | subject) + (1 | sentence)"}};
}

/// Writes the demo into `dir` (data under `dir/data`, config at
/// `dir/config.json`) and returns the config path.
inline fs::path write_demo(const fs::path& dir, const DemoOptions& opt = {}) {
  const fs::path data = dir / "data";
  fs::create_directories(data / "weights");
  fs::create_directories(data / "recipes");
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> z;

  const auto vocab = detail::demo_vocabulary();
  detail::save_text(data / "vocab.txt", vocab.serialize());
  const int V = static_cast<int>(vocab.vocab_size());

  // roster
  std::vector<meta::ModelMeta> roster;
  std::map<meta::Architecture, int> taken;
  for (const auto& m : meta::canonical_roster())
    if (opt.models_per_family <= 0 || taken[m.architecture]++ < opt.models_per_family) roster.push_back(m);
  std::vector<lm::Engine> engines;
  Json engine_json = Json::array();
  std::map<meta::Architecture, int> rank;
  for (const auto& m : roster) {
    const auto family = detail::family_of(m.architecture);
    const auto cfg = detail::demo_engine_config(family, V, rank[m.architecture]++);
    const auto file = fmt::format("weights/{}.sbwt", m.name);
    auto archive = lm::init_weights(cfg, io::fnv1a64(m.name, opt.seed));
    archive.save((data / file).string());
    engines.push_back(lm::Engine::load(archive, cfg));
    engine_json.push_back({{"name", m.name},
                           {"family", std::string(lm::to_string(family))},
                           {"architecture", std::string(meta::to_string(m.architecture))},
                           {"param_count", m.param_count},
                           {"config", detail::engine_config_json(cfg)},
                           {"weights", "data/" + file}});
  }
  // blend weights: larger models count more
  double min_scale = 1e300;
  for (const auto& m : roster) min_scale = std::min(min_scale, m.scale());
  std::vector<double> blend;
  double blend_sum = 0.0;
  for (const auto& m : roster) {
    blend.push_back(std::pow(m.scale() - min_scale + 0.25, 2));
    blend_sum += blend.back();
  }

  std::string corpus;
  for (int i = 0; i < opt.corpus_sentences; ++i) corpus += detail::sentence(rng, 5, 10) + "\n";
  detail::save_text(data / "corpus.txt", corpus);

  Json dataset_json = Json::array();
  for (const auto& ds : demo_datasets()) {
    // stimuli
    io::CsvWriter stim({"item", "sentence", "word_index", "word", "critical"});
    std::vector<corpus::StimulusItem> items;
    const int n_items = ds.n400 ? opt.n400_items : opt.reading_items;
    for (int i = 0; i < n_items; ++i) {
      corpus::StimulusItem item{ds.id, fmt::format("{}{:02d}", ds.n400 ? "s" : "p", i + 1), {}};
      const int sentences = ds.n400 ? 1 : 3;
      long long idx = 0;
      for (int s = 0; s < sentences; ++s) {
        auto text = detail::sentence(rng, ds.n400 ? 6 : 5, ds.n400 ? 9 : 8);
        std::vector<std::string> words;
        for (std::size_t p = 0, q; p <= text.size(); p = q + 1) {
          q = std::min(text.find(' ', p), text.size());
          words.push_back(text.substr(p, q - p));
        }
        for (std::size_t w = 0; w < words.size(); ++w) {
          const bool critical = ds.n400 && w + 1 == words.size();
          item.words.push_back({++idx, static_cast<std::size_t>(s), words[w], critical});
          stim.row({item.item_id, std::to_string(s + 1), std::to_string(idx), words[w], critical ? "1" : "0"});
        }
      }
      items.push_back(std::move(item));
    }
    const auto id_dir = data / ds.id;
    detail::save_text(id_dir / "stimuli.csv", stim.str());

    auto recipe = corpus::builtin_recipe(ds.id);
    detail::save_text(data / "recipes" / (ds.id + ".recipe"),
                      fmt::format("# synthetic demo: simplified random effects\ndataset = {}\nrandom = {}\n",
                                  ds.id, ds.random));

    // blended surprisal per (item, word)
    std::map<std::pair<std::string, long long>, double> truth;
    for (std::size_t e = 0; e < engines.size(); ++e)
      for (const auto& item : items)
        for (const auto& r : corpus::item_surprisals(engines[e], vocab, item, recipe.context, roster[e].name))
          truth[{r.item_id, r.word_index}] += blend[e] / blend_sum * r.surprisal;

    std::vector<double> subject_effect(static_cast<std::size_t>(opt.subjects));
    for (auto& v : subject_effect) v = z(rng);
    if (ds.n400) {
      io::CsvWriter w({"subject", "item", "word_index", "response", "baseline", "log_freq", "word_pos",
                       "orth_neighborhood", "concreteness"});
      std::map<std::string, double> item_effect;
      for (const auto& item : items) item_effect[item.item_id] = 0.7 * z(rng);
      for (int s = 0; s < opt.subjects; ++s)
        for (const auto& item : items) {
          const auto& word = item.words.back();
          const double baseline = z(rng);
          const double freq = detail::word_frequency(word.text);
          const double amp = 1.0 - 2.0 * truth[{item.item_id, word.word_index}] + 0.3 * baseline + 0.2 * freq +
                             subject_effect[static_cast<std::size_t>(s)] + item_effect[item.item_id] + 0.8 * z(rng);
          w.row({fmt::format("S{:02d}", s + 1), item.item_id, std::to_string(word.word_index),
                 io::format_number(amp), io::format_number(baseline), io::format_number(freq),
                 std::to_string(item.position(word.word_index) + 1), io::format_number(0.5 * z(rng)),
                 io::format_number(z(rng))});
        }
      detail::save_text(id_dir / "trials.csv", w.str());
    } else {
      std::vector<std::string> header{"subject", "item", "word_index", "response", "word_length",
                                      "log_freq", "word_pos", "sentence", "sentence_initial", "sentence_final"};
      const bool comprehension = ds.id == "futrell2021";
      if (comprehension) header.push_back("comprehension_score");
      io::CsvWriter w(header);
      std::uniform_int_distribution<int> score(3, 6);
      std::uniform_real_distribution<double> u;
      std::map<std::string, double> sentence_effect;
      for (int s = 0; s < opt.subjects; ++s) {
        const int subject_score = score(rng);
        for (const auto& item : items)
          for (std::size_t k = 0; k < item.words.size(); ++k) {
            const auto& word = item.words[k];
            const auto sentence_id = fmt::format("{}.{}", item.item_id, word.sentence);
            if (!sentence_effect.count(sentence_id)) sentence_effect[sentence_id] = 0.05 * z(rng);
            const bool initial = k == 0 || item.words[k - 1].sentence != word.sentence;
            const bool final = k + 1 == item.words.size() || item.words[k + 1].sentence != word.sentence;
            long long pos = 1;
            for (std::size_t j = k; j > 0 && item.words[j - 1].sentence == word.sentence; --j) ++pos;
            const double freq = detail::word_frequency(word.text);
            double rt = std::exp(5.6 + 0.15 * truth[{item.item_id, word.word_index}] +
                                 0.01 * static_cast<double>(word.text.size()) - 0.02 * freq +
                                 0.1 * subject_effect[static_cast<std::size_t>(s)] +
                                 sentence_effect[sentence_id] + 0.1 * z(rng));
            const double roll = u(rng);
            if (roll < 0.01) rt = 60.0 + 30.0 * u(rng);  // too fast
            else if (roll < 0.02) rt = 3500.0 + 1000.0 * u(rng);  // too slow
            std::vector<std::string> row{fmt::format("S{:02d}", s + 1), item.item_id,
                                         std::to_string(word.word_index), io::format_number(std::round(rt)),
                                         std::to_string(word.text.size()), io::format_number(freq),
                                         std::to_string(pos), sentence_id, initial ? "1" : "0", final ? "1" : "0"};
            if (comprehension) row.push_back(std::to_string(subject_score));
            w.row(row);
          }
      }
      detail::save_text(id_dir / "trials.csv", w.str());
    }
    dataset_json.push_back({{"recipe", fmt::format("data/recipes/{}.recipe", ds.id)},
                            {"trials", fmt::format("data/{}/trials.csv", ds.id)},
                            {"stimuli", fmt::format("data/{}/stimuli.csv", ds.id)}});
  }

  Json config{{"seed", opt.seed},
              {"workers", opt.workers},
              {"output_dir", "out"},
              {"vocabulary", "data/vocab.txt"},
              {"perplexity_corpus", "data/corpus.txt"},
              {"analysis_modes", {"scale", "perplexity"}},
              {"fdr", {{"method", "BY"}, {"family", "all"}}},
              {"standardize_indicators", true},
              {"fit", {{"criterion", "REML"}, {"restarts", 2}}},
              {"engines", engine_json},
              {"datasets", dataset_json}};
  const auto path = dir / "config.json";
  detail::save_text(path, config.dump(2) + "\n");
  return path;
}

}  // namespace slab::pipeline
