#pragma once

#include <cmath>
#include <stdexcept>

#include "motif/tensor.hpp"

namespace motif {

/// PolyNorm activation parameters: three power coefficients (the degree cap)
/// and a bias, plus the epsilon of the internal RMS normalizer.
template <typename S>
struct PolyNormParams {
  Tensor<S> coeffs;  // [3]
  Tensor<S> bias;    // [1]
  double epsilon = 1e-6;

  static PolyNormParams init(double eps = 1e-6) {
    if (eps <= 0) throw std::invalid_argument("polynorm: epsilon must be positive");
    PolyNormParams p;
    p.coeffs = Tensor<S>({3}, {S(1) / S(3), S(1) / S(3), S(1) / S(3)});
    p.bias = Tensor<S>::zeros({1});
    p.epsilon = eps;
    return p;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f("coeffs", coeffs);
    f("bias", bias);
  }
};

/// y = sum_{i=1..3} a_i * rho(x^i) + b, where rho RMS-normalizes over the
/// last dimension: rho(u) = u / sqrt(mean(u^2) + eps). Fused kernel; the
/// normalizer of the i-th term is r_i = 1/sqrt(mean(x^(2i)) + eps).
template <typename S>
Tensor<S> polynorm(const Tensor<S>& x, const PolyNormParams<S>& params) {
  if (x.rank() < 1 || x.extent(x.rank() - 1) < 1) {
    throw std::invalid_argument("polynorm: input must have a non-empty last dimension");
  }
  if (params.coeffs.numel() != 3 || params.bias.numel() != 1) {
    throw std::invalid_argument("polynorm: expected 3 coefficients and 1 bias");
  }
  const double eps = params.epsilon;
  if (eps <= 0) throw std::invalid_argument("polynorm: epsilon must be positive");
  const std::size_t width = x.extent(x.rank() - 1);
  const std::size_t rows = x.numel() / width;

  Tensor<S> out = Tensor<S>::make(x.shape(), "polynorm");
  auto rinv = std::make_shared<std::vector<double>>(rows * 3);
  const auto& xd = x.data();
  auto& yd = out.data();
  const S a1 = params.coeffs.data()[0], a2 = params.coeffs.data()[1], a3 = params.coeffs.data()[2];
  const S b = params.bias.data()[0];
  auto fwd = [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const S* xr = xd.data() + r * width;
      S* yr = yd.data() + r * width;
      double s2 = 0, s4 = 0, s6 = 0;
      for (std::size_t j = 0; j < width; ++j) {
        const double v = double(xr[j]);
        const double v2 = v * v;
        s2 += v2;
        s4 += v2 * v2;
        s6 += v2 * v2 * v2;
      }
      const double n = double(width);
      const double r1c = 1.0 / std::sqrt(s2 / n + eps);
      const double r2c = 1.0 / std::sqrt(s4 / n + eps);
      const double r3c = 1.0 / std::sqrt(s6 / n + eps);
      (*rinv)[r * 3 + 0] = r1c;
      (*rinv)[r * 3 + 1] = r2c;
      (*rinv)[r * 3 + 2] = r3c;
      for (std::size_t j = 0; j < width; ++j) {
        const S v = xr[j];
        const S v2 = v * v;
        yr[j] = a1 * v * S(r1c) + a2 * v2 * S(r2c) + a3 * v2 * v * S(r3c) + b;
      }
    }
  };
  if (rows >= 64 && x.numel() >= detail::kParallelCutoff) parallel_for(rows, fwd);
  else fwd(0, rows);

  out.attach({x, params.coeffs, params.bias},
             [rinv, width, rows, eps](const detail::TensorNode<S>& self) {
    const Tensor<S>& px = self.parents[0];
    const Tensor<S>& pa = self.parents[1];
    const Tensor<S>& pb = self.parents[2];
    const auto& xd2 = px.data();
    const auto& g = *self.grad;
    const double a1 = double(pa.data()[0]), a2 = double(pa.data()[1]), a3 = double(pa.data()[2]);
    const double n = double(width);

    // per-row reductions feed both the dx pass and the da/db sums
    std::vector<double> row_terms(rows * 4);
    const bool want_x = px.requires_grad();
    if (want_x) px.node()->ensure_grad();
    auto body = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t r = lo; r < hi; ++r) {
        const S* xr = xd2.data() + r * width;
        const S* gr = g.data() + r * width;
        const double r1c = (*rinv)[r * 3 + 0];
        const double r2c = (*rinv)[r * 3 + 1];
        const double r3c = (*rinv)[r * 3 + 2];
        double t1 = 0, t2 = 0, t3 = 0, tb = 0;
        for (std::size_t j = 0; j < width; ++j) {
          const double v = double(xr[j]);
          const double dy = double(gr[j]);
          t1 += dy * v;
          t2 += dy * v * v;
          t3 += dy * v * v * v;
          tb += dy;
        }
        row_terms[r * 4 + 0] = t1 * r1c;
        row_terms[r * 4 + 1] = t2 * r2c;
        row_terms[r * 4 + 2] = t3 * r3c;
        row_terms[r * 4 + 3] = tb;
        if (want_x) {
          S* pr = px.node()->grad->data() + r * width;
          const double c1 = a1 * t1 * r1c * r1c * r1c / n;
          const double c2 = a2 * t2 * r2c * r2c * r2c * 2.0 / n;
          const double c3 = a3 * t3 * r3c * r3c * r3c * 3.0 / n;
          for (std::size_t j = 0; j < width; ++j) {
            const double v = double(xr[j]);
            const double v2 = v * v;
            const double dy = double(gr[j]);
            const double direct =
                dy * (a1 * r1c + a2 * r2c * 2.0 * v + a3 * r3c * 3.0 * v2);
            const double through_norm = c1 * v + c2 * v2 * v + c3 * v2 * v2 * v;
            pr[j] += static_cast<S>(direct - through_norm);
          }
        }
      }
    };
    if (rows >= 64 && g.size() >= detail::kParallelCutoff) parallel_for(rows, body);
    else body(0, rows);

    if (pa.requires_grad()) {
      pa.node()->ensure_grad();
      double da1 = 0, da2 = 0, da3 = 0;
      for (std::size_t r = 0; r < rows; ++r) {
        da1 += row_terms[r * 4 + 0];
        da2 += row_terms[r * 4 + 1];
        da3 += row_terms[r * 4 + 2];
      }
      (*pa.node()->grad)[0] += static_cast<S>(da1);
      (*pa.node()->grad)[1] += static_cast<S>(da2);
      (*pa.node()->grad)[2] += static_cast<S>(da3);
    }
    if (pb.requires_grad()) {
      pb.node()->ensure_grad();
      double db = 0;
      for (std::size_t r = 0; r < rows; ++r) db += row_terms[r * 4 + 3];
      (*pb.node()->grad)[0] += static_cast<S>(db);
    }
  });
  return out;
}

}  // namespace motif
