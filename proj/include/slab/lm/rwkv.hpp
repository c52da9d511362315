#pragma once

// RWKV-4 style recurrent block.
//
// Time mixing blends each channel with the previous token's (normalized)
// input, then forms a weighted key-value average whose weights decay
// geometrically with distance, w = -exp(decay) per channel, plus a bonus u
// for the current token:
//
//   wkv_t = (sum_{i<t} e^{(t-1-i)w + k_i} v_i + e^{u+k_t} v_t)
//         / (sum_{i<t} e^{(t-1-i)w + k_i}     + e^{u+k_t})
//
// Channel mixing is a token-shifted squared-ReLU MLP gated by a sigmoid.
// The recurrent path carries (a, b, p) = numerator, denominator and their
// shared log-scale per channel; the parallel path evaluates the sums above
// directly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "slab/lm/config.hpp"
#include "slab/lm/kernels.hpp"
#include "slab/lm/token.hpp"
#include "slab/lm/weights.hpp"

namespace slab::lm {

class RwkvModel {
 public:
  /// Doubles per layer in the recurrent state: attention shift, a, b, p, ffn shift.
  static constexpr std::size_t kSlots = 5;

  RwkvModel(const EngineConfig& config, const WeightArchive& w)
      : d_(static_cast<std::size_t>(config.d_model)),
        embed_(to_matrix(w.at("embed"))),
        ln0_gain_(to_vec(w.at("ln0.weight"))),
        ln0_bias_(to_vec(w.at("ln0.bias"))),
        final_gain_(to_vec(w.at("final_norm.weight"))),
        final_bias_(to_vec(w.at("final_norm.bias"))),
        head_(to_matrix(w.at("head"))) {
    for (int l = 0; l < config.n_layers; ++l) {
      auto name = [&](std::string_view leaf) { return fmt::format("layers.{}.{}", l, leaf); };
      Layer layer{to_vec(w.at(name("ln1.weight"))),  to_vec(w.at(name("ln1.bias"))),
                  to_vec(w.at(name("att.mix_k"))),   to_vec(w.at(name("att.mix_v"))),
                  to_vec(w.at(name("att.mix_r"))),   to_vec(w.at(name("att.decay"))),
                  to_vec(w.at(name("att.first"))),   to_matrix(w.at(name("att.wk"))),
                  to_matrix(w.at(name("att.wv"))),   to_matrix(w.at(name("att.wr"))),
                  to_matrix(w.at(name("att.wo"))),   to_vec(w.at(name("ln2.weight"))),
                  to_vec(w.at(name("ln2.bias"))),    to_vec(w.at(name("ffn.mix_k"))),
                  to_vec(w.at(name("ffn.mix_r"))),   to_matrix(w.at(name("ffn.wk"))),
                  to_matrix(w.at(name("ffn.wv"))),   to_matrix(w.at(name("ffn.wr")))};
      for (auto& dec : layer.decay) dec = -std::exp(dec);
      layers_.push_back(std::move(layer));
    }
  }

  std::size_t state_size() const { return layers_.size() * kSlots * d_; }

  std::vector<double> initial_state() const {
    std::vector<double> s(state_size(), 0.0);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      double* p = s.data() + (l * kSlots + 3) * d_;
      std::fill(p, p + d_, -std::numeric_limits<double>::infinity());
    }
    return s;
  }

  /// Consumes one token, updating `state` in place; returns the next-token row.
  Vec step(std::vector<double>& state, TokenId id) const {
    auto e = embed_.row(id);
    Vec x = layer_norm(e, ln0_gain_, ln0_bias_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      double* att_x = state.data() + (l * kSlots + 0) * d_;
      double* aa = state.data() + (l * kSlots + 1) * d_;
      double* bb = state.data() + (l * kSlots + 2) * d_;
      double* pp = state.data() + (l * kSlots + 3) * d_;
      double* ffn_x = state.data() + (l * kSlots + 4) * d_;

      Vec xx = layer_norm(x, L.ln1_gain, L.ln1_bias);
      Vec xk(d_), xv(d_), xr(d_);
      for (std::size_t i = 0; i < d_; ++i) {
        xk[i] = xx[i] * L.mix_k[i] + att_x[i] * (1.0 - L.mix_k[i]);
        xv[i] = xx[i] * L.mix_v[i] + att_x[i] * (1.0 - L.mix_v[i]);
        xr[i] = xx[i] * L.mix_r[i] + att_x[i] * (1.0 - L.mix_r[i]);
      }
      std::copy(xx.begin(), xx.end(), att_x);
      Vec k = matvec(xk, L.wk), v = matvec(xv, L.wv), r = matvec(xr, L.wr);
      Vec mixed(d_);
      for (std::size_t i = 0; i < d_; ++i) {
        const double ww = L.first[i] + k[i];
        const double p = std::max(pp[i], ww);
        const double e1 = std::exp(pp[i] - p), e2 = std::exp(ww - p);
        const double wkv = (e1 * aa[i] + e2 * v[i]) / (e1 * bb[i] + e2);
        mixed[i] = sigmoid(r[i]) * wkv;

        const double decayed = pp[i] + L.decay[i];
        const double p2 = std::max(decayed, k[i]);
        const double f1 = std::exp(decayed - p2), f2 = std::exp(k[i] - p2);
        aa[i] = f1 * aa[i] + f2 * v[i];
        bb[i] = f1 * bb[i] + f2;
        pp[i] = p2;
      }
      add_inplace(x, matvec(mixed, L.wo));

      Vec prev(ffn_x, ffn_x + d_);
      Vec yy = layer_norm(x, L.ln2_gain, L.ln2_bias);
      std::copy(yy.begin(), yy.end(), ffn_x);
      channel_mix(L, yy, prev, x);
    }
    return log_softmax(matvec(layer_norm(x, final_gain_, final_bias_), head_));
  }

  /// Parallel evaluation of a whole sequence; row t follows ids[0..t].
  std::vector<Vec> forward(std::span<const TokenId> ids) const {
    const std::size_t n = ids.size();
    std::vector<Vec> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = layer_norm(embed_.row(ids[t]), ln0_gain_, ln0_bias_);
    const Vec zero(d_, 0.0);
    for (const auto& L : layers_) {
      std::vector<Vec> xx(n), k(n), v(n), r(n);
      for (std::size_t t = 0; t < n; ++t) xx[t] = layer_norm(x[t], L.ln1_gain, L.ln1_bias);
      for (std::size_t t = 0; t < n; ++t) {
        const Vec& prev = t ? xx[t - 1] : zero;
        Vec xk(d_), xv(d_), xr(d_);
        for (std::size_t i = 0; i < d_; ++i) {
          xk[i] = xx[t][i] * L.mix_k[i] + prev[i] * (1.0 - L.mix_k[i]);
          xv[i] = xx[t][i] * L.mix_v[i] + prev[i] * (1.0 - L.mix_v[i]);
          xr[i] = xx[t][i] * L.mix_r[i] + prev[i] * (1.0 - L.mix_r[i]);
        }
        k[t] = matvec(xk, L.wk);
        v[t] = matvec(xv, L.wv);
        r[t] = matvec(xr, L.wr);
      }
      Vec expo;
      for (std::size_t t = 0; t < n; ++t) {
        Vec mixed(d_);
        for (std::size_t i = 0; i < d_; ++i) {
          expo.assign(t + 1, 0.0);
          for (std::size_t s = 0; s < t; ++s)
            expo[s] = static_cast<double>(t - 1 - s) * L.decay[i] + k[s][i];
          expo[t] = L.first[i] + k[t][i];
          const double m = *std::max_element(expo.begin(), expo.end());
          double num = 0.0, den = 0.0;
          for (std::size_t s = 0; s <= t; ++s) {
            const double wgt = std::exp(expo[s] - m);
            num += wgt * v[s][i];
            den += wgt;
          }
          mixed[i] = sigmoid(r[t][i]) * (num / den);
        }
        add_inplace(x[t], matvec(mixed, L.wo));
      }
      std::vector<Vec> yy(n);
      for (std::size_t t = 0; t < n; ++t) yy[t] = layer_norm(x[t], L.ln2_gain, L.ln2_bias);
      for (std::size_t t = 0; t < n; ++t) channel_mix(L, yy[t], t ? yy[t - 1] : zero, x[t]);
    }
    std::vector<Vec> rows(n);
    for (std::size_t t = 0; t < n; ++t)
      rows[t] = log_softmax(matvec(layer_norm(x[t], final_gain_, final_bias_), head_));
    return rows;
  }

 private:
  struct Layer {
    Vec ln1_gain, ln1_bias, mix_k, mix_v, mix_r, decay, first;
    Matrix wk, wv, wr, wo;
    Vec ln2_gain, ln2_bias, ffn_mix_k, ffn_mix_r;
    Matrix ffn_wk, ffn_wv, ffn_wr;
  };

  void channel_mix(const Layer& L, const Vec& yy, std::span<const double> prev, Vec& x) const {
    Vec xk(d_), xr(d_);
    for (std::size_t i = 0; i < d_; ++i) {
      xk[i] = yy[i] * L.ffn_mix_k[i] + prev[i] * (1.0 - L.ffn_mix_k[i]);
      xr[i] = yy[i] * L.ffn_mix_r[i] + prev[i] * (1.0 - L.ffn_mix_r[i]);
    }
    Vec hidden = matvec(xk, L.ffn_wk);
    for (auto& h : hidden) h = h > 0.0 ? h * h : 0.0;
    Vec val = matvec(hidden, L.ffn_wv);
    Vec gate = matvec(xr, L.ffn_wr);
    for (std::size_t i = 0; i < d_; ++i) x[i] += sigmoid(gate[i]) * val[i];
  }

  std::size_t d_;
  Matrix embed_;
  Vec ln0_gain_, ln0_bias_;
  std::vector<Layer> layers_;
  Vec final_gain_, final_bias_;
  Matrix head_;
};

}  // namespace slab::lm
