#pragma once

// Stimulus passages, context construction, and per-word surprisal records.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "slab/corpus/recipe.hpp"
#include "slab/io/csv.hpp"
#include "slab/lm/surprisal.hpp"

namespace slab::corpus {

struct StimulusWord {
  long long word_index = 0;
  std::size_t sentence = 0;  ///< 0-based sentence number within the item
  std::string text;
  bool critical = false;
};

struct StimulusItem {
  std::string dataset_id;
  std::string item_id;
  std::vector<StimulusWord> words;  ///< ordered by word_index

  std::size_t sentence_count() const { return words.empty() ? 0 : words.back().sentence + 1; }

  /// Position of `word_index` in `words`.
  std::size_t position(long long word_index) const {
    auto it = std::lower_bound(words.begin(), words.end(), word_index,
                               [](const StimulusWord& w, long long k) { return w.word_index < k; });
    if (it == words.end() || it->word_index != word_index)
      throw ValidationError(
          fmt::format("item '{}' has no word with index {}", item_id, word_index));
    return static_cast<std::size_t>(it - words.begin());
  }

  void validate() const {
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto& w = words[i];
      if (w.text.empty() || std::any_of(w.text.begin(), w.text.end(), [](char c) {
            return lm::is_space_byte(static_cast<unsigned char>(c));
          }))
        throw ValidationError(fmt::format("item '{}': word {} is empty or contains whitespace",
                                          item_id, w.word_index));
      if (i > 0 && w.word_index <= words[i - 1].word_index)
        throw ValidationError(
            fmt::format("item '{}': word indices must strictly increase", item_id));
      if (i > 0 && w.sentence < words[i - 1].sentence)
        throw ValidationError(fmt::format("item '{}': sentence numbers decrease", item_id));
    }
  }
};

/// Reads `item,sentence,word_index,word,critical` rows. Items keep their order
/// of first appearance; sentence labels are renumbered from 0 in order.
inline std::vector<StimulusItem> parse_stimuli(const io::CsvTable& table, std::string_view dataset_id,
                                               std::string_view source) {
  const auto item_c = table.require_column("item", source);
  const auto sent_c = table.require_column("sentence", source);
  const auto idx_c = table.require_column("word_index", source);
  const auto word_c = table.require_column("word", source);
  const auto crit_c = table.column("critical");

  struct Raw {
    long long index;
    long long sentence;
    std::string text;
    bool critical;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Raw>> by_item;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::size_t line = r + 2;
    Raw raw{io::parse_int(cells[idx_c], source, line, "word_index"),
            io::parse_int(cells[sent_c], source, line, "sentence"), cells[word_c],
            crit_c ? io::parse_int(cells[*crit_c], source, line, "critical") != 0 : false};
    auto [it, inserted] = by_item.try_emplace(cells[item_c]);
    if (inserted) order.push_back(cells[item_c]);
    it->second.push_back(std::move(raw));
  }
  std::vector<StimulusItem> items;
  for (const auto& id : order) {
    auto raws = by_item[id];
    std::stable_sort(raws.begin(), raws.end(),
                     [](const Raw& a, const Raw& b) { return a.index < b.index; });
    StimulusItem item{std::string(dataset_id), id, {}};
    std::size_t sentence = 0;
    for (std::size_t i = 0; i < raws.size(); ++i) {
      if (i > 0 && raws[i].sentence != raws[i - 1].sentence) {
        if (raws[i].sentence < raws[i - 1].sentence)
          throw ValidationError(fmt::format("{}: item '{}': sentence numbers decrease", source, id));
        ++sentence;
      }
      item.words.push_back({raws[i].index, sentence, raws[i].text, raws[i].critical});
    }
    item.validate();
    items.push_back(std::move(item));
  }
  return items;
}

inline std::vector<StimulusItem> load_stimuli(const std::string& path, std::string_view dataset_id) {
  return parse_stimuli(io::read_csv(path), dataset_id, path);
}

/// Text preceding `word_index`: the current sentence so far, or the whole
/// passage so far. Words are joined by single spaces.
inline std::string build_context(const StimulusItem& item, long long word_index,
                                 ContextPolicy policy) {
  const auto pos = item.position(word_index);
  const auto sentence = item.words[pos].sentence;
  std::string out;
  for (std::size_t i = 0; i < pos; ++i) {
    if (policy == ContextPolicy::sentence_so_far && item.words[i].sentence != sentence) continue;
    if (!out.empty()) out += ' ';
    out += item.words[i].text;
  }
  return out;
}

/// A stretch of text evaluated in one engine pass, with each word's span.
/// A span includes the word's leading space, so the span's tokens are exactly
/// the tokens the engine predicts after the context.
struct EvaluationUnit {
  std::string text;
  std::vector<std::size_t> word_positions;  ///< indices into item.words
  std::vector<lm::ByteSpan> spans;
};

inline std::vector<EvaluationUnit> evaluation_units(const StimulusItem& item, ContextPolicy policy) {
  std::vector<EvaluationUnit> units;
  for (std::size_t i = 0; i < item.words.size(); ++i) {
    bool fresh = units.empty() || (policy == ContextPolicy::sentence_so_far &&
                                   item.words[i].sentence != item.words[i - 1].sentence);
    if (fresh) units.emplace_back();
    auto& u = units.back();
    std::size_t begin = u.text.size();
    if (!u.text.empty()) u.text += ' ';
    u.text += item.words[i].text;
    u.word_positions.push_back(i);
    u.spans.push_back({begin, u.text.size()});
  }
  return units;
}

struct SurprisalRecord {
  std::string dataset_id;
  std::string item_id;
  long long word_index = 0;
  std::string word;
  std::string engine;
  double surprisal = 0.0;  ///< nats
  std::size_t tokens = 0;
};

/// Word surprisals for every word of `item` under `model`.
template <lm::SurprisalModel Model>
std::vector<SurprisalRecord> item_surprisals(const Model& model, const lm::Vocabulary& vocab,
                                             const StimulusItem& item, ContextPolicy policy,
                                             const std::string& engine_name) {
  std::vector<SurprisalRecord> out;
  for (const auto& unit : evaluation_units(item, policy)) {
    auto tokens = vocab.tokenize(unit.text);
    auto s = model.token_surprisals(tokens);
    for (std::size_t k = 0; k < unit.spans.size(); ++k) {
      const auto& w = item.words[unit.word_positions[k]];
      std::size_t count = 0;
      for (const auto& t : tokens)
        if (t.span.begin >= unit.spans[k].begin && t.span.end <= unit.spans[k].end) ++count;
      out.push_back({item.dataset_id, item.item_id, w.word_index, w.text, engine_name,
                     lm::word_surprisal(s, unit.spans[k], tokens), count});
    }
  }
  return out;
}

inline std::string surprisal_csv(const std::vector<SurprisalRecord>& records) {
  io::CsvWriter w({"dataset", "item", "word_index", "word", "engine", "surprisal", "tokens"});
  for (const auto& r : records)
    w.row({r.dataset_id, r.item_id, std::to_string(r.word_index), r.word, r.engine,
           io::format_number(r.surprisal), std::to_string(r.tokens)});
  return w.str();
}

inline std::vector<SurprisalRecord> parse_surprisal_csv(std::string_view text,
                                                        std::string_view source) {
  auto table = io::parse_csv(text, source);
  const std::size_t c[] = {
      table.require_column("dataset", source),   table.require_column("item", source),
      table.require_column("word_index", source), table.require_column("word", source),
      table.require_column("engine", source),    table.require_column("surprisal", source),
      table.require_column("tokens", source)};
  std::vector<SurprisalRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    out.push_back({cells[c[0]], cells[c[1]], io::parse_int(cells[c[2]], source, r + 2, "word_index"),
                   cells[c[3]], cells[c[4]], io::parse_double(cells[c[5]], source, r + 2, "surprisal"),
                   static_cast<std::size_t>(io::parse_int(cells[c[6]], source, r + 2, "tokens"))});
  }
  return out;
}

}  // namespace slab::corpus
