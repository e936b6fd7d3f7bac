#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "motif/tensor.hpp"

namespace motif {

struct OptimizerConfig {
  double peak_lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double epsilon = 1e-8;
  std::int64_t warmup_steps = 5000;

  void validate() const {
    if (peak_lr <= 0) throw std::invalid_argument("optimizer: peak_lr must be positive");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) {
      throw std::invalid_argument("optimizer: betas must lie in (0,1)");
    }
    if (epsilon <= 0) throw std::invalid_argument("optimizer: epsilon must be positive");
    if (weight_decay < 0) throw std::invalid_argument("optimizer: weight_decay must be >= 0");
    if (warmup_steps < 0) throw std::invalid_argument("optimizer: warmup_steps must be >= 0");
  }
};

/// Warmup-Stable-Decay schedule over a single progress axis (tokens in the
/// training loop). The decay is an inverse-sqrt pinned to both endpoints:
/// lr(t) = peak * (A/sqrt(t) + C) with lr(stable_end) = peak and
/// lr(total) = floor_fraction * peak.
struct WsdSchedule {
  double warmup = 0;
  double stable_end = 0;
  double total = 0;
  double floor_fraction = 0.25;

  void validate() const {
    if (warmup < 0 || warmup >= stable_end || stable_end >= total) {
      throw std::invalid_argument("wsd: require 0 <= warmup < stable_end < total");
    }
    if (floor_fraction <= 0 || floor_fraction > 1) {
      throw std::invalid_argument("wsd: floor_fraction must lie in (0,1]");
    }
  }
};

inline double wsd_lr(double progress, const WsdSchedule& sched, const OptimizerConfig& opt) {
  sched.validate();
  if (progress < 0 || progress > sched.total) {
    throw std::domain_error("wsd: progress " + std::to_string(progress) + " outside [0, " +
                            std::to_string(sched.total) + "]");
  }
  const double peak = opt.peak_lr;
  if (progress < sched.warmup) return peak * progress / sched.warmup;
  if (progress <= sched.stable_end) return peak;
  const double rs = 1.0 / std::sqrt(sched.stable_end);
  const double rt = 1.0 / std::sqrt(sched.total);
  const double a = (1.0 - sched.floor_fraction) / (rs - rt);
  const double c = 1.0 - a * rs;
  return peak * (a / std::sqrt(progress) + c);
}

/// AdamW first/second moments, parallel to a fixed parameter order.
template <typename S>
struct AdamState {
  std::vector<std::vector<S>> m, v;
  std::uint64_t step = 0;

  static AdamState init(const std::vector<std::pair<std::string, Tensor<S>>>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& [name, t] : params) {
      st.m.emplace_back(t.numel(), S(0));
      st.v.emplace_back(t.numel(), S(0));
    }
    return st;
  }
};

/// Decoupled AdamW update with bias-corrected moments:
/// w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w).
/// Validates every gradient before mutating anything.
template <typename S>
void adamw_step(std::vector<std::pair<std::string, Tensor<S>>>& params, AdamState<S>& state,
                double lr, const OptimizerConfig& opt) {
  opt.validate();
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adamw: state does not match parameter count");
  }
  for (auto& [name, t] : params) {
    if (!t.has_grad()) {
      throw std::runtime_error("adamw: missing gradient for parameter " + name);
    }
    for (S g : t.grad()) {
      if (!std::isfinite(double(g))) {
        throw std::runtime_error("adamw: non-finite gradient in parameter " + name);
      }
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, double(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p].second.data();
    const auto& g = params[p].second.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    const S b1 = S(opt.beta1), b2 = S(opt.beta2);
    auto body = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        m[i] = b1 * m[i] + (S(1) - b1) * g[i];
        v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
        const double mhat = double(m[i]) / bc1;
        const double vhat = double(v[i]) / bc2;
        w[i] = static_cast<S>(double(w[i]) -
                              lr * (mhat / (std::sqrt(vhat) + opt.epsilon) +
                                    opt.weight_decay * double(w[i])));
      }
    };
    if (w.size() >= detail::kParallelCutoff) parallel_for(w.size(), body);
    else body(0, w.size());
  }
}

/// Global L2 norm of all parameter gradients, accumulated in double in a
/// fixed order.
template <typename S>
double global_grad_norm(std::vector<std::pair<std::string, Tensor<S>>>& params) {
  double acc = 0;
  for (auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (S g : t.grad()) acc += double(g) * double(g);
  }
  return std::sqrt(acc);
}

/// Scales all gradients so the global norm does not exceed max_norm.
template <typename S>
double clip_grad_norm(std::vector<std::pair<std::string, Tensor<S>>>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const S factor = static_cast<S>(max_norm / norm);
    for (auto& [name, t] : params) {
      if (!t.has_grad()) continue;
      for (S& g : t.grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace motif
