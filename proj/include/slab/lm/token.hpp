#pragma once

// Whitespace-piece tokenizer with byte fallback.
//
// Text is first cut into segments, each a run of whitespace followed by a run
// of non-whitespace ("the", " cat", "\n\nThe"). Every segment is then covered
// greedily by the longest matching vocabulary piece; bytes no piece covers
// become byte tokens. Tokens therefore never straddle a segment boundary, so a
// word span that includes its leading whitespace is always tiled exactly.
//
// Id layout for a vocabulary file with L lines:
//   [0, L)        pieces, line number = id
//   [L, L + 256)  byte-fallback tokens, id = L + byte value
//   L + 256       beginning-of-sequence
// so vocab_size() == L + 257 and bos() == vocab_size() - 1.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"
#include "slab/io/csv.hpp"

namespace slab::lm {

using TokenId = std::uint32_t;

/// Half-open byte range into a source string.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const ByteSpan&, const ByteSpan&) = default;
};

struct Token {
  TokenId id = 0;
  ByteSpan span;

  friend bool operator==(const Token&, const Token&) = default;
};

inline bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class Vocabulary {
 public:
  /// In vocabulary files U+2581 ("▁") stands for a literal space so that
  /// leading-space pieces stay visible.
  static constexpr std::string_view kSpaceMarker = "\xE2\x96\x81";

  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      const auto& p = pieces_[i];
      if (p.empty()) continue;
      // First occurrence wins for duplicate lines.
      lookup_.try_emplace(p, static_cast<TokenId>(i));
      if (p.size() > max_piece_) max_piece_ = p.size();
    }
  }

  static Vocabulary parse(std::string_view text) {
    std::vector<std::string> pieces;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(pos, nl - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      pieces.push_back(decode_line(line));
      pos = nl + 1;
    }
    return Vocabulary(std::move(pieces));
  }

  static Vocabulary load(const std::string& path) { return parse(io::read_file(path)); }

  /// File form: one piece per line, spaces written as the marker.
  std::string serialize() const {
    std::string out;
    for (const auto& p : pieces_) {
      for (char c : p) {
        if (c == ' ')
          out += kSpaceMarker;
        else
          out.push_back(c);
      }
      out.push_back('\n');
    }
    return out;
  }

  std::size_t piece_count() const { return pieces_.size(); }
  std::size_t vocab_size() const { return pieces_.size() + 257; }
  TokenId byte_token(unsigned char b) const { return static_cast<TokenId>(pieces_.size() + b); }
  TokenId bos() const { return static_cast<TokenId>(pieces_.size() + 256); }

  bool is_byte_token(TokenId id) const {
    return id >= pieces_.size() && id < pieces_.size() + 256;
  }

  /// Raw bytes a token stands for; BOS maps to the empty string.
  std::string token_bytes(TokenId id) const {
    if (id < pieces_.size()) return pieces_[id];
    if (is_byte_token(id)) return std::string(1, static_cast<char>(id - pieces_.size()));
    if (id == bos()) return {};
    throw ValidationError(fmt::format("token id {} out of range for vocabulary of size {}", id,
                                      vocab_size()));
  }

  std::vector<Token> tokenize(std::string_view text) const {
    std::vector<Token> tokens;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t seg_end = pos;
      while (seg_end < text.size() && is_space_byte(static_cast<unsigned char>(text[seg_end])))
        ++seg_end;
      while (seg_end < text.size() && !is_space_byte(static_cast<unsigned char>(text[seg_end])))
        ++seg_end;
      tokenize_segment(text, pos, seg_end, tokens);
      pos = seg_end;
    }
    return tokens;
  }

  std::string detokenize(std::span<const Token> tokens) const {
    std::string out;
    for (const auto& t : tokens) out += token_bytes(t.id);
    return out;
  }

 private:
  static std::string decode_line(std::string_view line) {
    std::string out;
    for (std::size_t i = 0; i < line.size();) {
      if (line.substr(i, kSpaceMarker.size()) == kSpaceMarker) {
        out.push_back(' ');
        i += kSpaceMarker.size();
      } else {
        out.push_back(line[i++]);
      }
    }
    return out;
  }

  void tokenize_segment(std::string_view text, std::size_t begin, std::size_t end,
                        std::vector<Token>& out) const {
    std::size_t pos = begin;
    while (pos < end) {
      std::size_t longest = std::min(max_piece_, end - pos);
      bool matched = false;
      for (std::size_t len = longest; len > 0; --len) {
        auto it = lookup_.find(std::string(text.substr(pos, len)));
        if (it != lookup_.end()) {
          out.push_back({it->second, {pos, pos + len}});
          pos += len;
          matched = true;
          break;
        }
      }
      if (!matched) {
        out.push_back({byte_token(static_cast<unsigned char>(text[pos])), {pos, pos + 1}});
        ++pos;
      }
    }
  }

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> lookup_;
  std::size_t max_piece_ = 0;
};

inline std::vector<Token> tokenize(std::string_view text, const Vocabulary& vocab) {
  return vocab.tokenize(text);
}

inline std::string detokenize(std::span<const Token> tokens, const Vocabulary& vocab) {
  return vocab.detokenize(tokens);
}

inline std::vector<TokenId> token_ids(std::span<const Token> tokens) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(t.id);
  return ids;
}

}  // namespace slab::lm
