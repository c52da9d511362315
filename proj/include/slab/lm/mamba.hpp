#pragma once

// Mamba-style selective state-space block.
//
//   h         = rms_norm(x)
//   (u, z)    = h * W_in
//   u         = silu(causal_depthwise_conv(u))
//   (dl, B, C) = u * W_x                    -- input-dependent B, C and step size
//   dt        = softplus(dl * W_dt + b_dt)
//   s_t[c,n]  = exp(dt[c] A[c,n]) s_{t-1}[c,n] + dt[c] B[n] u[c],   A = -exp(A_log)
//   y[c]      = (sum_n C[n] s_t[c,n] + D[c] u[c]) * silu(z[c])
//   x        += y * W_out
//
// The recurrent state per layer is the last (kernel - 1) conv inputs plus the
// d_inner x state_size scan state. The parallel path expands the scan as
//   s_t = sum_{j<=t} exp(A (T_t - T_j)) dt_j B_j u_j,  T_t = sum_{r<=t} dt_r.

#include <algorithm>
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

class MambaModel {
 public:
  MambaModel(const EngineConfig& config, const WeightArchive& w)
      : d_(static_cast<std::size_t>(config.d_model)),
        di_(static_cast<std::size_t>(config.mamba_inner())),
        n_(static_cast<std::size_t>(config.mamba_params().state_size)),
        kernel_(static_cast<std::size_t>(config.mamba_params().conv_kernel)),
        rank_(static_cast<std::size_t>(config.mamba_dt_rank())),
        embed_(to_matrix(w.at("embed"))),
        final_gain_(to_vec(w.at("final_norm.weight"))),
        head_(to_matrix(w.at("head"))) {
    for (int l = 0; l < config.n_layers; ++l) {
      auto name = [&](std::string_view leaf) { return fmt::format("layers.{}.{}", l, leaf); };
      Layer layer{to_vec(w.at(name("norm.weight"))),   to_matrix(w.at(name("in_proj"))),
                  to_matrix(w.at(name("conv.weight"))), to_vec(w.at(name("conv.bias"))),
                  to_matrix(w.at(name("x_proj"))),      to_matrix(w.at(name("dt_proj.weight"))),
                  to_vec(w.at(name("dt_proj.bias"))),   to_matrix(w.at(name("A_log"))),
                  to_vec(w.at(name("D"))),              to_matrix(w.at(name("out_proj")))};
      for (auto& a : layer.a.data) a = -std::exp(a);
      layers_.push_back(std::move(layer));
    }
  }

  std::size_t layer_state_size() const { return (kernel_ - 1) * di_ + di_ * n_; }
  std::size_t state_size() const { return layers_.size() * layer_state_size(); }
  std::vector<double> initial_state() const { return std::vector<double>(state_size(), 0.0); }

  Vec step(std::vector<double>& state, TokenId id) const {
    auto e = embed_.row(id);
    Vec x(e.begin(), e.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      double* conv = state.data() + l * layer_state_size();  // (kernel-1) x di, oldest first
      double* scan = conv + (kernel_ - 1) * di_;              // di x n

      Vec xz = matvec(rms_norm(x, L.norm_gain), L.in_proj);
      Vec u(di_);
      for (std::size_t c = 0; c < di_; ++c) {
        double acc = L.conv_bias[c] + L.conv_w(c, kernel_ - 1) * xz[c];
        for (std::size_t k = 0; k + 1 < kernel_; ++k) acc += L.conv_w(c, k) * conv[k * di_ + c];
        u[c] = silu(acc);
      }
      if (kernel_ > 1) {
        std::copy(conv + di_, conv + (kernel_ - 1) * di_, conv);
        std::copy(xz.begin(), xz.begin() + static_cast<std::ptrdiff_t>(di_),
                  conv + (kernel_ - 2) * di_);
      }
      Selection sel = select(L, u);
      Vec y(di_);
      for (std::size_t c = 0; c < di_; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n_; ++k) {
          double& s = scan[c * n_ + k];
          s = std::exp(sel.dt[c] * L.a(c, k)) * s + sel.dt[c] * sel.b[k] * u[c];
          acc += sel.c[k] * s;
        }
        y[c] = (acc + L.d[c] * u[c]) * silu(xz[di_ + c]);
      }
      add_inplace(x, matvec(y, L.out_proj));
    }
    return log_softmax(matvec(rms_norm(x, final_gain_), head_));
  }

  std::vector<Vec> forward(std::span<const TokenId> ids) const {
    const std::size_t T = ids.size();
    std::vector<Vec> x(T);
    for (std::size_t t = 0; t < T; ++t) {
      auto e = embed_.row(ids[t]);
      x[t].assign(e.begin(), e.end());
    }
    for (const auto& L : layers_) {
      std::vector<Vec> xz(T), u(T);
      std::vector<Selection> sel(T);
      for (std::size_t t = 0; t < T; ++t) xz[t] = matvec(rms_norm(x[t], L.norm_gain), L.in_proj);
      for (std::size_t t = 0; t < T; ++t) {
        u[t].resize(di_);
        for (std::size_t c = 0; c < di_; ++c) {
          double acc = L.conv_bias[c];
          for (std::size_t k = 0; k < kernel_; ++k) {
            // tap k sees input t - (kernel-1) + k; earlier positions are zero padding
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) -
                                       static_cast<std::ptrdiff_t>(kernel_ - 1);
            if (src >= 0) acc += L.conv_w(c, k) * xz[static_cast<std::size_t>(src)][c];
          }
          u[t][c] = silu(acc);
        }
        sel[t] = select(L, u[t]);
      }
      std::vector<Vec> cum(T, Vec(di_));
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < di_; ++c) cum[t][c] = (t ? cum[t - 1][c] : 0.0) + sel[t].dt[c];
      for (std::size_t t = 0; t < T; ++t) {
        Vec y(di_);
        for (std::size_t c = 0; c < di_; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < n_; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j <= t; ++j) {
              const double gap = cum[t][c] - cum[j][c];
              s += std::exp(L.a(c, k) * gap) * sel[j].dt[c] * sel[j].b[k] * u[j][c];
            }
            acc += sel[t].c[k] * s;
          }
          y[c] = (acc + L.d[c] * u[t][c]) * silu(xz[t][di_ + c]);
        }
        add_inplace(x[t], matvec(y, L.out_proj));
      }
    }
    std::vector<Vec> rows(T);
    for (std::size_t t = 0; t < T; ++t)
      rows[t] = log_softmax(matvec(rms_norm(x[t], final_gain_), head_));
    return rows;
  }

 private:
  struct Layer {
    Vec norm_gain;
    Matrix in_proj, conv_w;
    Vec conv_bias;
    Matrix x_proj, dt_proj;
    Vec dt_bias;
    Matrix a;  // holds A = -exp(A_log)
    Vec d;
    Matrix out_proj;
  };

  struct Selection {
    Vec dt, b, c;
  };

  Selection select(const Layer& L, const Vec& u) const {
    Vec dbc = matvec(u, L.x_proj);
    Selection s;
    Vec low(dbc.begin(), dbc.begin() + static_cast<std::ptrdiff_t>(rank_));
    s.b.assign(dbc.begin() + static_cast<std::ptrdiff_t>(rank_),
               dbc.begin() + static_cast<std::ptrdiff_t>(rank_ + n_));
    s.c.assign(dbc.begin() + static_cast<std::ptrdiff_t>(rank_ + n_), dbc.end());
    s.dt = matvec(low, L.dt_proj);
    for (std::size_t c = 0; c < di_; ++c) s.dt[c] = softplus(s.dt[c] + L.dt_bias[c]);
    return s;
  }

  std::size_t d_, di_, n_, kernel_, rank_;
  Matrix embed_;
  std::vector<Layer> layers_;
  Vec final_gain_;
  Matrix head_;
};

}  // namespace slab::lm
