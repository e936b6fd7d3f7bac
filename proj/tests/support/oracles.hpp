#pragma once

// Test-side oracles, independent of the library's tensor/tape path: plain
// double loops only.

#include <cmath>
#include <vector>

#include "motif/attention.hpp"

namespace motif::testing {

// Single-map attention: softmax(Q1 K1^T / sqrt(comp)) V with rotary
// embedding, per-head RMS norm scaled by (1 - lambda_init), and the output
// projection -- the expected value of diff_attention when the second map's
// contribution is forced to zero.
inline std::vector<double> standard_attention_oracle(const Tensor<double>& x,
                                                     const DiffAttnParams<double>& p,
                                                     double theta, bool causal) {
  const std::size_t S = x.extent(0), d = p.model_dim, H = p.heads;
  const std::size_t comp = p.component_dim(), vdim = p.value_dim();
  auto matvec = [&](const Tensor<double>& w, std::size_t s, std::size_t j) {
    double acc = 0;
    for (std::size_t i = 0; i < d; ++i) acc += x.at({s, i}) * w.at({i, j});
    return acc;
  };
  // q1/k1 sub-head c of head h lives at column h*2*comp + c
  std::vector<double> q(S * H * comp), k(S * H * comp), v(S * H * vdim);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t c = 0; c < comp; ++c) {
        q[(s * H + h) * comp + c] = matvec(p.wq, s, h * 2 * comp + c);
        k[(s * H + h) * comp + c] = matvec(p.wk, s, h * 2 * comp + c);
      }
      for (std::size_t c = 0; c < vdim; ++c) {
        v[(s * H + h) * vdim + c] = matvec(p.wv, s, h * vdim + c);
      }
    }
  }
  // rotate q/k pairs in place
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < comp / 2; ++i) {
        const double freq = std::pow(theta, -2.0 * double(i) / double(comp));
        const double c = std::cos(double(s) * freq), sn = std::sin(double(s) * freq);
        for (auto* buf : {&q, &k}) {
          double& a = (*buf)[(s * H + h) * comp + 2 * i];
          double& b = (*buf)[(s * H + h) * comp + 2 * i + 1];
          const double a0 = a, b0 = b;
          a = a0 * c - b0 * sn;
          b = a0 * sn + b0 * c;
        }
      }
    }
  }
  std::vector<double> out(S * d, 0.0);
  std::vector<double> merged(S * d, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t s = 0; s < S; ++s) {
      std::vector<double> scores(S, -1e300);
      const std::size_t limit = causal ? s + 1 : S;
      double mx = -1e300;
      for (std::size_t t = 0; t < limit; ++t) {
        double acc = 0;
        for (std::size_t c = 0; c < comp; ++c) {
          acc += q[(s * H + h) * comp + c] * k[(t * H + h) * comp + c];
        }
        scores[t] = acc / std::sqrt(double(comp));
        mx = std::max(mx, scores[t]);
      }
      double z = 0;
      for (std::size_t t = 0; t < limit; ++t) z += std::exp(scores[t] - mx);
      std::vector<double> ctx(vdim, 0.0);
      for (std::size_t t = 0; t < limit; ++t) {
        const double w = std::exp(scores[t] - mx) / z;
        for (std::size_t c = 0; c < vdim; ++c) ctx[c] += w * v[(t * H + h) * vdim + c];
      }
      double ms = 0;
      for (double cv : ctx) ms += cv * cv;
      const double inv = 1.0 / std::sqrt(ms / double(vdim) + p.norm_eps);
      for (std::size_t c = 0; c < vdim; ++c) {
        merged[s * d + h * vdim + c] =
            p.head_gains.at({h, c}) * ctx[c] * inv * (1.0 - p.lambda_init);
      }
    }
  }
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0;
      for (std::size_t i = 0; i < d; ++i) acc += merged[s * d + i] * p.wo.at({i, j});
      out[s * d + j] = acc;
    }
  }
  return out;
}

}  // namespace motif::testing
