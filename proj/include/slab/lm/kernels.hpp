#pragma once

// Dense kernels shared by the engine families. Weights are held in double
// precision (converted from the float32 archive once at load time), so every
// reduction accumulates in 64 bits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "slab/error.hpp"
#include "slab/lm/weights.hpp"

namespace slab::lm {

using Vec = std::vector<double>;

/// Row-major matrix used as a right-multiplied projection: y = x * W.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

inline Vec to_vec(const Tensor& t) { return Vec(t.data.begin(), t.data.end()); }

inline Matrix to_matrix(const Tensor& t) {
  if (t.shape.size() != 2) throw ShapeError("expected a 2-D tensor");
  return {static_cast<std::size_t>(t.shape[0]), static_cast<std::size_t>(t.shape[1]),
          Vec(t.data.begin(), t.data.end())};
}

/// x (length rows) times W -> length cols.
inline Vec matvec(std::span<const double> x, const Matrix& w) {
  Vec y(w.cols, 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* wr = w.data.data() + i * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += xi * wr[j];
  }
  return y;
}

inline void add_inplace(Vec& a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

inline Vec layer_norm(std::span<const double> x, std::span<const double> gain,
                      std::span<const double> bias, double eps = 1e-5) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  return y;
}

inline Vec rms_norm(std::span<const double> x, std::span<const double> gain, double eps = 1e-5) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + eps);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * gain[i];
  return y;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline Vec log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace slab::lm
