#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"
#include "slab/lm/token.hpp"

namespace slab::lm {

/// Anything that can score a token sequence: real engines, and the fixed
/// oracles used in tests.
template <class M>
concept SurprisalModel = requires(const M& m, std::span<const Token> tokens) {
  { m.token_surprisals(tokens) } -> std::convertible_to<std::vector<double>>;
};

inline double nats_to_bits(double nats) { return nats / std::numbers::ln2; }

/// Sum of the surprisals of the contiguous token run that tiles `word`
/// exactly. Words split mid-token raise AlignmentError naming the token.
inline double word_surprisal(std::span<const double> token_surprisals, ByteSpan word,
                             std::span<const Token> tokens) {
  if (token_surprisals.size() != tokens.size())
    throw ValidationError("word_surprisal: surprisal and token counts differ");
  if (word.end <= word.begin) throw AlignmentError("word_surprisal: empty word span");
  double total = 0.0;
  std::size_t covered_to = word.begin;
  bool started = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i].span;
    if (t.end <= word.begin || t.begin >= word.end) continue;
    if (t.begin < word.begin || t.end > word.end) {
      throw AlignmentError(fmt::format(
          "word span [{},{}) splits token {} (id {}, span [{},{}))", word.begin, word.end, i,
          tokens[i].id, t.begin, t.end));
    }
    if (t.begin != covered_to) break;
    total += token_surprisals[i];
    covered_to = t.end;
    started = true;
  }
  if (!started || covered_to != word.end) {
    throw AlignmentError(fmt::format("word span [{},{}) is not tiled by tokens (covered to {})",
                                     word.begin, word.end, covered_to));
  }
  return total;
}

struct PerplexityResult {
  std::size_t words = 0;
  std::size_t tokens = 0;
  double total_nats = 0.0;
  double perplexity = 0.0;
};

inline std::size_t count_whitespace_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = is_space_byte(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

/// exp(total token surprisal / number of whitespace-separated words).
template <SurprisalModel M>
PerplexityResult word_level_perplexity(const M& model, const Vocabulary& vocab,
                                       std::string_view text) {
  PerplexityResult r;
  r.words = count_whitespace_words(text);
  if (r.words == 0) throw ValidationError("word_level_perplexity: text contains no words");
  auto tokens = vocab.tokenize(text);
  r.tokens = tokens.size();
  for (double s : model.token_surprisals(tokens)) r.total_nats += s;
  r.perplexity = std::exp(r.total_nats / static_cast<double>(r.words));
  return r;
}

}  // namespace slab::lm
