#pragma once

// Pre-norm decoder-only transformer with rotary position encoding.
//
//   x   = embed[token]
//   x  += Wo * attn(rope(Wq ln1(x)), rope(Wk ln1(x)), Wv ln1(x))   (causal, per head)
//   x  += W2 gelu(W1 ln2(x) + b1) + b2
//   out = log_softmax(head * ln_f(x))

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "slab/lm/config.hpp"
#include "slab/lm/kernels.hpp"
#include "slab/lm/token.hpp"
#include "slab/lm/weights.hpp"

namespace slab::lm {

class TransformerModel {
 public:
  /// Per-layer keys and values for every position seen so far. Grows by
  /// 2 * n_layers * d_model doubles per token.
  struct KvCache {
    std::vector<std::vector<Vec>> keys;    // [layer][position]
    std::vector<std::vector<Vec>> values;  // [layer][position]
    std::size_t length = 0;

    std::size_t byte_size() const {
      std::size_t n = 0;
      for (const auto& layer : keys)
        for (const auto& k : layer) n += k.size();
      for (const auto& layer : values)
        for (const auto& v : layer) n += v.size();
      return n * sizeof(double);
    }
  };

  TransformerModel(const EngineConfig& config, const WeightArchive& w)
      : vocab_(static_cast<std::size_t>(config.vocab_size)),
        d_(static_cast<std::size_t>(config.d_model)),
        heads_(static_cast<std::size_t>(config.transformer_params().n_heads)),
        embed_(to_matrix(w.at("embed"))),
        final_gain_(to_vec(w.at("final_norm.weight"))),
        final_bias_(to_vec(w.at("final_norm.bias"))),
        head_(to_matrix(w.at("head"))) {
    for (int l = 0; l < config.n_layers; ++l) {
      auto name = [&](std::string_view leaf) { return fmt::format("layers.{}.{}", l, leaf); };
      layers_.push_back(Layer{
          to_vec(w.at(name("ln1.weight"))), to_vec(w.at(name("ln1.bias"))),
          to_matrix(w.at(name("attn.wq"))), to_matrix(w.at(name("attn.wk"))),
          to_matrix(w.at(name("attn.wv"))), to_matrix(w.at(name("attn.wo"))),
          to_vec(w.at(name("ln2.weight"))), to_vec(w.at(name("ln2.bias"))),
          to_matrix(w.at(name("mlp.w1"))), to_vec(w.at(name("mlp.b1"))),
          to_matrix(w.at(name("mlp.w2"))), to_vec(w.at(name("mlp.b2")))});
    }
  }

  KvCache empty_cache() const {
    KvCache c;
    c.keys.resize(layers_.size());
    c.values.resize(layers_.size());
    return c;
  }

  /// Whole-sequence causal pass. Row t is the next-token distribution after
  /// ids[0..t].
  std::vector<Vec> forward(std::span<const TokenId> ids) const {
    const std::size_t n = ids.size();
    std::vector<Vec> x(n);
    for (std::size_t t = 0; t < n; ++t) {
      auto e = embed_.row(ids[t]);
      x[t].assign(e.begin(), e.end());
    }
    for (const auto& layer : layers_) {
      std::vector<Vec> q(n), k(n), v(n);
      for (std::size_t t = 0; t < n; ++t) {
        Vec h = layer_norm(x[t], layer.ln1_gain, layer.ln1_bias);
        q[t] = matvec(h, layer.wq);
        k[t] = matvec(h, layer.wk);
        v[t] = matvec(h, layer.wv);
        apply_rope(q[t], t);
        apply_rope(k[t], t);
      }
      for (std::size_t t = 0; t < n; ++t) {
        Vec att = attend(q[t], std::span<const Vec>(k.data(), t + 1),
                         std::span<const Vec>(v.data(), t + 1));
        add_inplace(x[t], matvec(att, layer.wo));
        mlp(layer, x[t]);
      }
    }
    std::vector<Vec> rows(n);
    for (std::size_t t = 0; t < n; ++t) rows[t] = output_row(x[t]);
    return rows;
  }

  /// Appends one token to the cache and returns the next-token distribution.
  Vec decode(KvCache& cache, TokenId id) const {
    const std::size_t pos = cache.length;
    auto e = embed_.row(id);
    Vec x(e.begin(), e.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      Vec h = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
      Vec q = matvec(h, layer.wq);
      Vec k = matvec(h, layer.wk);
      apply_rope(q, pos);
      apply_rope(k, pos);
      cache.keys[l].push_back(std::move(k));
      cache.values[l].push_back(matvec(h, layer.wv));
      Vec att = attend(q, cache.keys[l], cache.values[l]);
      add_inplace(x, matvec(att, layer.wo));
      mlp(layer, x);
    }
    ++cache.length;
    return output_row(x);
  }

 private:
  struct Layer {
    Vec ln1_gain, ln1_bias;
    Matrix wq, wk, wv, wo;
    Vec ln2_gain, ln2_bias;
    Matrix w1;
    Vec b1;
    Matrix w2;
    Vec b2;
  };

  void apply_rope(Vec& x, std::size_t pos) const {
    const std::size_t hd = d_ / heads_;
    for (std::size_t h = 0; h < heads_; ++h) {
      double* v = x.data() + h * hd;
      for (std::size_t i = 0; i < hd / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
        const double angle = static_cast<double>(pos) * freq;
        const double c = std::cos(angle), s = std::sin(angle);
        const double a = v[2 * i], b = v[2 * i + 1];
        v[2 * i] = a * c - b * s;
        v[2 * i + 1] = a * s + b * c;
      }
    }
  }

  Vec attend(const Vec& q, std::span<const Vec> keys, std::span<const Vec> values) const {
    const std::size_t hd = d_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Vec out(d_, 0.0);
    Vec scores(keys.size());
    for (std::size_t h = 0; h < heads_; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t j = 0; j < keys.size(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < hd; ++i) s += q[off + i] * keys[j][off + i];
        scores[j] = s * scale;
      }
      Vec p = log_softmax(scores);
      for (std::size_t j = 0; j < keys.size(); ++j) {
        const double wj = std::exp(p[j]);
        for (std::size_t i = 0; i < hd; ++i) out[off + i] += wj * values[j][off + i];
      }
    }
    return out;
  }

  void mlp(const Layer& layer, Vec& x) const {
    Vec h = layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    Vec a = matvec(h, layer.w1);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = gelu(a[i] + layer.b1[i]);
    Vec o = matvec(a, layer.w2);
    for (std::size_t i = 0; i < d_; ++i) x[i] += o[i] + layer.b2[i];
  }

  Vec output_row(const Vec& x) const {
    return log_softmax(matvec(layer_norm(x, final_gain_, final_bias_), head_));
  }

  std::size_t vocab_, d_, heads_;
  Matrix embed_;
  std::vector<Layer> layers_;
  Vec final_gain_, final_bias_;
  Matrix head_;
};

}  // namespace slab::lm
