#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>

#include "motif/rope.hpp"
#include "motif/tensor.hpp"

namespace motif {

/// Per-layer anchor for the attention-map subtraction weight:
/// 0.8 - 0.6 * exp(-0.3 * (layer_index - 1)), layer_index 1-based.
inline double lambda_init_for_layer(int layer_index) {
  if (layer_index < 1) {
    throw std::domain_error("lambda_init: layer_index must be >= 1, got " +
                            std::to_string(layer_index));
  }
  return 0.8 - 0.6 * std::exp(-0.3 * double(layer_index - 1));
}

/// Differential-attention layer parameters. Q/K project into paired
/// sub-heads of dimension model_dim/(2*heads); V keeps the full head
/// dimension model_dim/heads.
template <typename S>
struct DiffAttnParams {
  std::size_t model_dim = 0;
  std::size_t heads = 0;
  double lambda_init = 0.0;
  double norm_eps = 1e-6;

  Tensor<S> wq, wk, wv, wo;          // [model_dim, model_dim]
  Tensor<S> lq1, lk1, lq2, lk2;      // [model_dim / (2*heads)]
  Tensor<S> head_gains;              // [heads, model_dim / heads]

  std::size_t component_dim() const { return model_dim / (2 * heads); }
  std::size_t value_dim() const { return model_dim / heads; }

  static DiffAttnParams init(std::size_t model_dim, std::size_t heads, int layer_index,
                             std::mt19937_64& rng, double norm_eps = 1e-6) {
    if (heads == 0 || model_dim % (2 * heads) != 0) {
      throw std::invalid_argument("diff_attention: model_dim " + std::to_string(model_dim) +
                                  " must be divisible by 2*heads (" + std::to_string(2 * heads) +
                                  ")");
    }
    DiffAttnParams p;
    p.model_dim = model_dim;
    p.heads = heads;
    p.lambda_init = lambda_init_for_layer(layer_index);
    p.norm_eps = norm_eps;
    p.wq = Tensor<S>::randn({model_dim, model_dim}, rng, 0.02);
    p.wk = Tensor<S>::randn({model_dim, model_dim}, rng, 0.02);
    p.wv = Tensor<S>::randn({model_dim, model_dim}, rng, 0.02);
    p.wo = Tensor<S>::randn({model_dim, model_dim}, rng, 0.02);
    const std::size_t comp = p.component_dim();
    p.lq1 = Tensor<S>::randn({comp}, rng, 0.1);
    p.lk1 = Tensor<S>::randn({comp}, rng, 0.1);
    p.lq2 = Tensor<S>::randn({comp}, rng, 0.1);
    p.lk2 = Tensor<S>::randn({comp}, rng, 0.1);
    p.head_gains = Tensor<S>::ones({heads, p.value_dim()});
    return p;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f("wq", wq);
    f("wk", wk);
    f("wv", wv);
    f("wo", wo);
    f("lambda_q1", lq1);
    f("lambda_k1", lk1);
    f("lambda_q2", lq2);
    f("lambda_k2", lk2);
    f("head_gains", head_gains);
  }
};

/// Optional introspection of the attention internals.
template <typename S>
struct DiffAttnTrace {
  Tensor<S> a1, a2;        // [B, heads, seq, seq]
  Tensor<S> pre_norm;      // [B, heads, seq, value_dim]
  Tensor<S> lambda_full;   // rank-0
};

/// Lower-triangular 0/1 mask of extent seq.
template <typename S>
Tensor<S> causal_mask(std::size_t seq) {
  Tensor<S> m({seq, seq});
  for (std::size_t i = 0; i < seq; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.data()[i * seq + j] = S(1);
  }
  return m;
}

/// Differential attention over x of shape [seq, model_dim] or
/// [batch, seq, model_dim]: two softmax maps from paired Q/K sub-heads,
/// output (A1 - lambda*A2)V per head, head-wise RMS norm scaled by
/// (1 - lambda_init), heads concatenated and projected.
template <typename S>
Tensor<S> diff_attention(const Tensor<S>& x, const DiffAttnParams<S>& params,
                         const RopeTablePtr& rope, bool causal = true,
                         std::size_t position_offset = 0, DiffAttnTrace<S>* trace = nullptr) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) {
    throw std::invalid_argument("diff_attention: expected [seq, model_dim] or "
                                "[batch, seq, model_dim], got " + shape_str(x.shape()));
  }
  const std::size_t d = params.model_dim;
  if (x.extent(x.rank() - 1) != d) {
    throw std::invalid_argument("diff_attention: input " + shape_str(x.shape()) +
                                " does not match model_dim " + std::to_string(d));
  }
  const std::size_t batch = batched ? x.extent(0) : 1;
  const std::size_t seq = x.extent(batched ? 1 : 0);
  const std::size_t heads = params.heads;
  const std::size_t comp = params.component_dim();
  const std::size_t vdim = params.value_dim();
  if (rope->params().head_component_dim != comp) {
    throw std::invalid_argument("diff_attention: rope component dim " +
                                std::to_string(rope->params().head_component_dim) +
                                " does not match " + std::to_string(comp));
  }

  Tensor<S> xb = batched ? x : reshape(x, {1, seq, d});

  // projections -> paired sub-heads [B,H,S,comp] and values [B,H,S,vdim]
  Tensor<S> q_proj = matmul(xb, params.wq);
  Tensor<S> k_proj = matmul(xb, params.wk);
  Tensor<S> q1 = rope_apply_seq_minor(gather_heads(q_proj, heads, 2, 0, comp), position_offset, rope);
  Tensor<S> q2 = rope_apply_seq_minor(gather_heads(q_proj, heads, 2, 1, comp), position_offset, rope);
  Tensor<S> k1 = rope_apply_seq_minor(gather_heads(k_proj, heads, 2, 0, comp), position_offset, rope);
  Tensor<S> k2 = rope_apply_seq_minor(gather_heads(k_proj, heads, 2, 1, comp), position_offset, rope);
  Tensor<S> v = gather_heads(matmul(xb, params.wv), heads, 1, 0, vdim);

  const S inv_sqrt_d = static_cast<S>(1.0 / std::sqrt(double(comp)));
  Tensor<S> a1, a2;
  if (causal) {
    a1 = softmax_causal(matmul(q1, k1, false, true, inv_sqrt_d));
    a2 = softmax_causal(matmul(q2, k2, false, true, inv_sqrt_d));
  } else {
    a1 = softmax_lastdim(matmul(q1, k1, false, true, inv_sqrt_d));
    a2 = softmax_lastdim(matmul(q2, k2, false, true, inv_sqrt_d));
  }

  // lambda = exp(lq1.lk1) - exp(lq2.lk2) + lambda_init
  Tensor<S> lambda_full = add_const(
      sub(exp_t(dot(params.lq1, params.lk1)), exp_t(dot(params.lq2, params.lk2))),
      static_cast<S>(params.lambda_init));

  Tensor<S> ctx = matmul(sub_scaled(a1, a2, lambda_full), v);  // [B,H,S,vdim]
  Tensor<S> normed = headwise_rms_norm(ctx, params.head_gains, params.norm_eps);
  normed = scale(normed, static_cast<S>(1.0 - params.lambda_init));

  Tensor<S> out = matmul(merge_heads(normed), params.wo);
  if (trace) {
    trace->a1 = a1;
    trace->a2 = a2;
    trace->pre_norm = ctx;
    trace->lambda_full = lambda_full;
  }
  return batched ? out : reshape(out, {seq, d});
}

}  // namespace motif
