#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"

namespace slab::lm {

enum class Family { transformer, rwkv, mamba };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::transformer: return "transformer";
    case Family::rwkv: return "rwkv";
    case Family::mamba: return "mamba";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "transformer") return Family::transformer;
  if (s == "rwkv") return Family::rwkv;
  if (s == "mamba") return Family::mamba;
  throw ValidationError(fmt::format("unknown engine family '{}'", s));
}

struct TransformerParams {
  int n_heads = 4;
};

struct RwkvParams {
  int ffn_size = 0;  ///< channel-mix hidden width; 0 means 4 * d_model
};

struct MambaParams {
  int state_size = 16;
  int expand = 2;
  int conv_kernel = 4;
  int dt_rank = 0;  ///< 0 means ceil(d_model / 16)
};

struct TensorSpec {
  std::string name;
  std::vector<std::int64_t> shape;

  std::int64_t elements() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

struct EngineConfig {
  Family family = Family::transformer;
  int vocab_size = 2;
  int d_model = 8;
  int n_layers = 1;
  std::variant<TransformerParams, RwkvParams, MambaParams> family_params = TransformerParams{};

  static EngineConfig transformer(int vocab, int d_model, int layers, int heads) {
    return {Family::transformer, vocab, d_model, layers, TransformerParams{heads}};
  }
  static EngineConfig rwkv(int vocab, int d_model, int layers, int ffn_size = 0) {
    return {Family::rwkv, vocab, d_model, layers, RwkvParams{ffn_size}};
  }
  static EngineConfig mamba(int vocab, int d_model, int layers, int state_size = 16) {
    return {Family::mamba, vocab, d_model, layers, MambaParams{state_size}};
  }

  const TransformerParams& transformer_params() const {
    return std::get<TransformerParams>(family_params);
  }
  int rwkv_ffn() const {
    int f = std::get<RwkvParams>(family_params).ffn_size;
    return f > 0 ? f : 4 * d_model;
  }
  const MambaParams& mamba_params() const { return std::get<MambaParams>(family_params); }
  int mamba_inner() const { return mamba_params().expand * d_model; }
  int mamba_dt_rank() const {
    int r = mamba_params().dt_rank;
    return r > 0 ? r : (d_model + 15) / 16;
  }

  void validate() const {
    if (vocab_size < 2) throw ValidationError("engine config: vocab_size must be >= 2");
    if (d_model <= 0 || n_layers <= 0)
      throw ValidationError("engine config: d_model and n_layers must be positive");
    bool ok = false;
    switch (family) {
      case Family::transformer:
        ok = std::holds_alternative<TransformerParams>(family_params);
        if (ok) {
          int h = transformer_params().n_heads;
          if (h <= 0 || d_model % h != 0 || (d_model / h) % 2 != 0)
            throw ValidationError(fmt::format(
                "engine config: d_model {} must split into {} heads of even width", d_model, h));
        }
        break;
      case Family::rwkv:
        ok = std::holds_alternative<RwkvParams>(family_params);
        if (ok && std::get<RwkvParams>(family_params).ffn_size < 0)
          throw ValidationError("engine config: rwkv ffn_size must be positive");
        break;
      case Family::mamba:
        ok = std::holds_alternative<MambaParams>(family_params);
        if (ok) {
          const auto& m = mamba_params();
          if (m.state_size <= 0 || m.expand <= 0 || m.conv_kernel <= 0 || m.dt_rank < 0)
            throw ValidationError("engine config: mamba dimensions must be positive");
        }
        break;
    }
    if (!ok) throw ValidationError("engine config: family parameters do not match family");
  }

  /// Every tensor the family's forward pass reads, in archive order.
  std::vector<TensorSpec> required_tensors() const {
    validate();
    const std::int64_t V = vocab_size, d = d_model;
    std::vector<TensorSpec> t;
    t.push_back({"embed", {V, d}});
    auto layer = [](int l, std::string_view leaf) { return fmt::format("layers.{}.{}", l, leaf); };
    switch (family) {
      case Family::transformer:
        for (int l = 0; l < n_layers; ++l) {
          t.push_back({layer(l, "ln1.weight"), {d}});
          t.push_back({layer(l, "ln1.bias"), {d}});
          for (auto w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
            t.push_back({layer(l, w), {d, d}});
          t.push_back({layer(l, "ln2.weight"), {d}});
          t.push_back({layer(l, "ln2.bias"), {d}});
          t.push_back({layer(l, "mlp.w1"), {d, 4 * d}});
          t.push_back({layer(l, "mlp.b1"), {4 * d}});
          t.push_back({layer(l, "mlp.w2"), {4 * d, d}});
          t.push_back({layer(l, "mlp.b2"), {d}});
        }
        t.push_back({"final_norm.weight", {d}});
        t.push_back({"final_norm.bias", {d}});
        break;
      case Family::rwkv: {
        const std::int64_t F = rwkv_ffn();
        t.push_back({"ln0.weight", {d}});
        t.push_back({"ln0.bias", {d}});
        for (int l = 0; l < n_layers; ++l) {
          t.push_back({layer(l, "ln1.weight"), {d}});
          t.push_back({layer(l, "ln1.bias"), {d}});
          for (auto w : {"att.mix_k", "att.mix_v", "att.mix_r", "att.decay", "att.first"})
            t.push_back({layer(l, w), {d}});
          for (auto w : {"att.wk", "att.wv", "att.wr", "att.wo"}) t.push_back({layer(l, w), {d, d}});
          t.push_back({layer(l, "ln2.weight"), {d}});
          t.push_back({layer(l, "ln2.bias"), {d}});
          t.push_back({layer(l, "ffn.mix_k"), {d}});
          t.push_back({layer(l, "ffn.mix_r"), {d}});
          t.push_back({layer(l, "ffn.wk"), {d, F}});
          t.push_back({layer(l, "ffn.wv"), {F, d}});
          t.push_back({layer(l, "ffn.wr"), {d, d}});
        }
        t.push_back({"final_norm.weight", {d}});
        t.push_back({"final_norm.bias", {d}});
        break;
      }
      case Family::mamba: {
        const auto& m = mamba_params();
        const std::int64_t di = mamba_inner(), N = m.state_size, K = m.conv_kernel,
                           R = mamba_dt_rank();
        for (int l = 0; l < n_layers; ++l) {
          t.push_back({layer(l, "norm.weight"), {d}});
          t.push_back({layer(l, "in_proj"), {d, 2 * di}});
          t.push_back({layer(l, "conv.weight"), {di, K}});
          t.push_back({layer(l, "conv.bias"), {di}});
          t.push_back({layer(l, "x_proj"), {di, R + 2 * N}});
          t.push_back({layer(l, "dt_proj.weight"), {R, di}});
          t.push_back({layer(l, "dt_proj.bias"), {di}});
          t.push_back({layer(l, "A_log"), {di, N}});
          t.push_back({layer(l, "D"), {di}});
          t.push_back({layer(l, "out_proj"), {di, d}});
        }
        t.push_back({"final_norm.weight", {d}});
        break;
      }
    }
    t.push_back({"head", {d, V}});
    return t;
  }

  /// Closed-form parameter count for the dimensions.
  std::int64_t param_count() const {
    validate();
    const std::int64_t V = vocab_size, d = d_model, L = n_layers;
    switch (family) {
      case Family::transformer:
        return 2 * V * d + L * (12 * d * d + 9 * d) + 2 * d;
      case Family::rwkv: {
        const std::int64_t F = rwkv_ffn();
        return 2 * V * d + 2 * d + L * (5 * d * d + 11 * d + 2 * d * F) + 2 * d;
      }
      case Family::mamba: {
        const auto& m = mamba_params();
        const std::int64_t di = mamba_inner(), N = m.state_size, K = m.conv_kernel,
                           R = mamba_dt_rank();
        const std::int64_t per_layer =
            d + 2 * d * di + di * K + di + di * (R + 2 * N) + R * di + di + di * N + di + di * d;
        return 2 * V * d + L * per_layer + d;
      }
    }
    return 0;
  }
};

}  // namespace slab::lm
