#pragma once

#include <cstddef>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"
#include "slab/lm/config.hpp"
#include "slab/lm/kernels.hpp"
#include "slab/lm/mamba.hpp"
#include "slab/lm/rwkv.hpp"
#include "slab/lm/token.hpp"
#include "slab/lm/transformer.hpp"
#include "slab/lm/weights.hpp"

namespace slab::lm {

/// Natural-log next-token probabilities over the whole vocabulary.
struct LogProbRow {
  std::vector<double> values;

  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }
  double log_sum_exp() const { return lm::log_sum_exp(values); }
};

/// Fixed-size state of a recurrent engine after consuming `step_index` tokens.
struct RecurrentState {
  Family family = Family::rwkv;
  std::vector<double> data;
  std::size_t step_index = 0;

  /// Raw little-endian doubles; the size depends only on the engine config.
  std::string serialize() const {
    std::string out(data.size() * sizeof(double), '\0');
    std::memcpy(out.data(), data.data(), out.size());
    return out;
  }
};

class Engine {
 public:
  /// Builds an engine from an archive. The archive must carry every tensor the
  /// config requires with the declared shape; extra tensors are ignored.
  static Engine load(const WeightArchive& archive, const EngineConfig& config) {
    check_archive(archive, config);
    WeightArchive own;
    for (const auto& spec : config.required_tensors()) own.add(spec.name, archive.at(spec.name));
    return Engine(std::make_shared<const Impl>(config, std::move(own)));
  }

  const EngineConfig& config() const { return impl_->config; }
  Family family() const { return impl_->config.family; }
  std::size_t vocab_size() const { return static_cast<std::size_t>(impl_->config.vocab_size); }
  TokenId bos() const { return static_cast<TokenId>(impl_->config.vocab_size - 1); }
  bool is_recurrent() const { return family() != Family::transformer; }

  /// The tensors this engine was built from, in config order.
  const WeightArchive& archive() const { return impl_->archive; }
  std::int64_t param_count() const { return impl_->archive.total_elements(); }

  /// Distribution of the token following BOS + prefix.
  LogProbRow next_token_logprobs(std::span<const TokenId> prefix) const {
    check_ids(prefix);
    if (is_recurrent()) {
      RecurrentState state = initial_state();
      LogProbRow row = advance(state, bos());
      for (TokenId id : prefix) row = advance(state, id);
      return row;
    }
    auto ids = with_bos(prefix);
    auto rows = std::get<TransformerModel>(impl_->model).forward(ids);
    return {std::move(rows.back())};
  }

  /// Whole-sequence evaluation over BOS + ids: row t is the distribution of
  /// ids[t] given its prefix; the final row (index ids.size()) follows the
  /// whole sequence. Recurrent families use their parallel form here.
  std::vector<LogProbRow> sequence_logprobs(std::span<const TokenId> ids) const {
    check_ids(ids);
    auto full = with_bos(ids);
    std::vector<Vec> rows = std::visit([&](const auto& m) { return m.forward(full); }, impl_->model);
    std::vector<LogProbRow> out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back({std::move(r)});
    return out;
  }

  /// Same rows as sequence_logprobs, computed incrementally: one recurrent
  /// step per token, or one cached decode step for the transformer.
  std::vector<LogProbRow> incremental_logprobs(std::span<const TokenId> ids) const {
    check_ids(ids);
    std::vector<LogProbRow> out;
    out.reserve(ids.size() + 1);
    if (is_recurrent()) {
      RecurrentState state = initial_state();
      out.push_back(advance(state, bos()));
      for (TokenId id : ids) out.push_back(advance(state, id));
    } else {
      auto cache = kv_cache();
      out.push_back(decode(cache, bos()));
      for (TokenId id : ids) out.push_back(decode(cache, id));
    }
    return out;
  }

  /// Fresh state before any token (not even BOS) has been consumed.
  RecurrentState initial_state() const {
    require_recurrent("initial_state");
    RecurrentState s;
    s.family = family();
    s.data = std::visit(
        [](const auto& m) -> std::vector<double> {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, TransformerModel>) {
            return {};
          } else {
            return m.initial_state();
          }
        },
        impl_->model);
    return s;
  }

  /// Pure recurrent step: consumes `token` and returns the successor state
  /// with the distribution of the next token.
  std::pair<RecurrentState, LogProbRow> step(const RecurrentState& state, TokenId token) const {
    require_recurrent("step_recurrent");
    if (state.family != family() || state.data.size() != initial_state().data.size())
      throw FamilyError("recurrent state was not produced by this engine");
    check_id(token);
    RecurrentState next = state;
    LogProbRow row = advance(next, token);
    return {std::move(next), std::move(row)};
  }

  TransformerModel::KvCache kv_cache() const {
    if (family() != Family::transformer)
      throw FamilyError("kv cache is only defined for transformer engines");
    return std::get<TransformerModel>(impl_->model).empty_cache();
  }

  LogProbRow decode(TransformerModel::KvCache& cache, TokenId token) const {
    if (family() != Family::transformer)
      throw FamilyError("decode is only defined for transformer engines");
    check_id(token);
    return {std::get<TransformerModel>(impl_->model).decode(cache, token)};
  }

  /// Surprisal (nats) of every token given BOS and the tokens before it.
  std::vector<double> token_surprisals(std::span<const Token> tokens) const {
    if (tokens.empty()) throw ValidationError("token_surprisals: empty token sequence");
    auto ids = token_ids(tokens);
    auto rows = is_recurrent() ? incremental_logprobs(ids) : sequence_logprobs(ids);
    std::vector<double> s(ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) s[t] = -rows[t][ids[t]];
    return s;
  }

 private:
  using Model = std::variant<TransformerModel, RwkvModel, MambaModel>;

  static Model make_model(const EngineConfig& config, const WeightArchive& archive) {
    switch (config.family) {
      case Family::rwkv: return Model(std::in_place_type<RwkvModel>, config, archive);
      case Family::mamba: return Model(std::in_place_type<MambaModel>, config, archive);
      case Family::transformer: break;
    }
    return Model(std::in_place_type<TransformerModel>, config, archive);
  }

  struct Impl {
    Impl(const EngineConfig& c, WeightArchive a)
        : config(c), archive(std::move(a)), model(make_model(config, archive)) {}

    EngineConfig config;
    WeightArchive archive;
    Model model;
  };

  explicit Engine(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  void require_recurrent(std::string_view op) const {
    if (!is_recurrent())
      throw FamilyError(fmt::format("{}: transformer engines have no recurrent state", op));
  }

  void check_id(TokenId id) const {
    if (id >= vocab_size())
      throw ValidationError(fmt::format("token id {} out of range (vocab_size {})", id, vocab_size()));
  }

  void check_ids(std::span<const TokenId> ids) const {
    for (TokenId id : ids) check_id(id);
  }

  std::vector<TokenId> with_bos(std::span<const TokenId> ids) const {
    std::vector<TokenId> full;
    full.reserve(ids.size() + 1);
    full.push_back(bos());
    full.insert(full.end(), ids.begin(), ids.end());
    return full;
  }

  LogProbRow advance(RecurrentState& state, TokenId id) const {
    Vec row = std::visit(
        [&](const auto& m) -> Vec {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, RwkvModel> || std::is_same_v<M, MambaModel>) {
            return m.step(state.data, id);
          } else {
            throw FamilyError("advance on a non-recurrent engine");
          }
        },
        impl_->model);
    ++state.step_index;
    return {std::move(row)};
  }

  std::shared_ptr<const Impl> impl_;
};

/// Reads an archive from disk and builds the engine.
inline Engine load_weights(const std::string& path, const EngineConfig& config) {
  return Engine::load(WeightArchive::load(path), config);
}

}  // namespace slab::lm
