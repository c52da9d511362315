#include <gtest/gtest.h>

#include <random>
#include <string>

#include "slab/lm/token.hpp"

using slab::lm::ByteSpan;
using slab::lm::Token;
using slab::lm::Vocabulary;

namespace {

Vocabulary reference_vocab() {
  return Vocabulary({"the", " cat", " sat", " on", " mat", "e", " ", "ca", "t"});
}

void expect_tiles(const std::vector<Token>& tokens, const std::string& text, const Vocabulary& v) {
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    ASSERT_EQ(t.span.begin, pos);
    ASSERT_GT(t.span.end, t.span.begin);
    ASSERT_LT(t.id, v.vocab_size());
    pos = t.span.end;
  }
  ASSERT_EQ(pos, text.size());
}

}  // namespace

TEST(Tokenizer, EmptyInputGivesNoTokens) {
  EXPECT_TRUE(reference_vocab().tokenize("").empty());
}

TEST(Tokenizer, LeadingSpaceFoldsIntoFollowingWord) {
  auto v = reference_vocab();
  auto tokens = v.tokenize("the cat");
  ASSERT_EQ(tokens.size(), 2u);
  EXPECT_EQ(tokens[0].span, (ByteSpan{0, 3}));
  EXPECT_EQ(tokens[1].span, (ByteSpan{3, 7}));
  EXPECT_EQ(tokens[0].id, 0u);
  EXPECT_EQ(tokens[1].id, 1u);
}

TEST(Tokenizer, UnknownBytesFallBack) {
  auto v = reference_vocab();
  auto tokens = v.tokenize("the dog");
  // " d", "o", "g" are not pieces: " " then three bytes
  ASSERT_EQ(tokens.size(), 5u);
  EXPECT_EQ(tokens[1].id, 6u);
  EXPECT_TRUE(v.is_byte_token(tokens[2].id));
  EXPECT_EQ(tokens[2].id, v.byte_token('d'));
  EXPECT_EQ(v.detokenize(tokens), "the dog");
}

TEST(Tokenizer, PiecesNeverCrossWhitespaceSegments) {
  // "e c" would span two segments, so it must never be used.
  Vocabulary v({"e c", "th", "e", " c", "at"});
  auto tokens = v.tokenize("the cat");
  for (const auto& t : tokens) EXPECT_NE(t.id, 0u);
  expect_tiles(tokens, "the cat", v);
}

TEST(Tokenizer, IdLayout) {
  auto v = reference_vocab();
  EXPECT_EQ(v.vocab_size(), 9u + 257u);
  EXPECT_EQ(v.byte_token(0), 9u);
  EXPECT_EQ(v.byte_token(255), 9u + 255u);
  EXPECT_EQ(v.bos(), v.vocab_size() - 1);
  EXPECT_EQ(v.token_bytes(v.bos()), "");
  EXPECT_THROW(v.token_bytes(static_cast<slab::lm::TokenId>(v.vocab_size())),
               slab::ValidationError);
}

TEST(Tokenizer, VocabularyFileUsesSpaceMarker) {
  auto v = Vocabulary::parse("the\n\xE2\x96\x81" "cat\n");
  EXPECT_EQ(v.piece_count(), 2u);
  EXPECT_EQ(v.token_bytes(1), " cat");
  EXPECT_EQ(Vocabulary::parse(v.serialize()).serialize(), v.serialize());
  auto tokens = v.tokenize("the cat");
  ASSERT_EQ(tokens.size(), 2u);
  EXPECT_EQ(tokens[1].id, 1u);
}

TEST(Tokenizer, RandomByteStringsRoundTrip) {
  auto v = reference_vocab();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(0, 64);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> coin(0, 3);
  const std::string alphabet = "the cat sat on mat\n\t";
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    int n = len(rng);
    for (int i = 0; i < n; ++i) {
      // mix arbitrary bytes with text-like bytes so pieces actually match
      if (coin(rng) == 0)
        s.push_back(static_cast<char>(byte(rng)));
      else
        s.push_back(alphabet[static_cast<std::size_t>(byte(rng)) % alphabet.size()]);
    }
    auto tokens = v.tokenize(s);
    expect_tiles(tokens, s, v);
    ASSERT_EQ(v.detokenize(tokens), s);
    ASSERT_EQ(v.tokenize(s), tokens);
  }
}
