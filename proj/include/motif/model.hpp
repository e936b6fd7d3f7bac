#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "motif/attention.hpp"
#include "motif/config.hpp"
#include "motif/polynorm.hpp"
#include "motif/rope.hpp"
#include "motif/tensor.hpp"

namespace motif {

template <typename S>
struct LayerParams {
  DiffAttnParams<S> attn;
  PolyNormParams<S> poly;
  Tensor<S> attn_norm_gain, ffn_norm_gain;  // [hidden]
  Tensor<S> w_up, w_gate;                   // [hidden, ffn]
  Tensor<S> w_down;                         // [ffn, hidden]
};

/// Decoder-only transformer: pre-norm residual blocks of differential
/// attention and a PolyNorm-gated FFN, tied input/output embedding.
template <typename S>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    validate_config(cfg);
    if (!cfg.tied_embeddings) {
      throw std::invalid_argument("model: only tied embeddings are supported");
    }
    std::mt19937_64 rng(seed);
    const std::size_t d = cfg.hidden_dim;
    embedding_ = Tensor<S>::randn({cfg.vocab_size, d}, rng, 0.02);
    layers_.reserve(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      LayerParams<S> layer;
      layer.attn = DiffAttnParams<S>::init(d, cfg.n_heads, int(l) + 1, rng, cfg.rmsnorm_epsilon);
      layer.poly = PolyNormParams<S>::init(cfg.polynorm_epsilon);
      layer.attn_norm_gain = Tensor<S>::ones({d});
      layer.ffn_norm_gain = Tensor<S>::ones({d});
      layer.w_up = Tensor<S>::randn({d, cfg.ffn_dim}, rng, 0.02);
      layer.w_gate = Tensor<S>::randn({d, cfg.ffn_dim}, rng, 0.02);
      layer.w_down = Tensor<S>::randn({cfg.ffn_dim, d}, rng, 0.02);
      layers_.push_back(std::move(layer));
    }
    if (cfg.n_layers > 0) final_norm_gain_ = Tensor<S>::ones({d});
    rebuild_rope();
    for_each_param([](const std::string&, Tensor<S>& t) { t.set_requires_grad(true); });
  }

  const ModelConfig& config() const { return cfg_; }
  const RopeTablePtr& rope() const { return rope_; }
  Tensor<S>& embedding_table() { return embedding_; }
  std::vector<LayerParams<S>>& layers() { return layers_; }

  /// Visits every parameter tensor in a fixed canonical order.
  void for_each_param(const std::function<void(const std::string&, Tensor<S>&)>& f) {
    f("embed.weight", embedding_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string prefix = "layers." + std::to_string(l) + ".";
      layers_[l].attn.for_each_param(
          [&](const char* name, Tensor<S>& t) { f(prefix + "attn." + name, t); });
      f(prefix + "attn_norm.gain", layers_[l].attn_norm_gain);
      f(prefix + "ffn_norm.gain", layers_[l].ffn_norm_gain);
      f(prefix + "ffn.w_up", layers_[l].w_up);
      f(prefix + "ffn.w_gate", layers_[l].w_gate);
      f(prefix + "ffn.w_down", layers_[l].w_down);
      layers_[l].poly.for_each_param(
          [&](const char* name, Tensor<S>& t) { f(prefix + "poly." + name, t); });
    }
    if (cfg_.n_layers > 0) f("final_norm.gain", final_norm_gain_);
  }

  std::vector<std::pair<std::string, Tensor<S>>> named_params() {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    for_each_param([&](const std::string& n, Tensor<S>& t) { out.emplace_back(n, t); });
    return out;
  }

  std::uint64_t num_scalars() {
    std::uint64_t n = 0;
    for_each_param([&](const std::string&, Tensor<S>& t) { n += t.numel(); });
    return n;
  }

  void zero_grads() {
    for_each_param([](const std::string&, Tensor<S>& t) { t.zero_grad(); });
  }

  /// Applies ABF context extension in place: config and rotation table change,
  /// weights do not.
  void apply_abf(double new_theta, std::size_t new_max_len) {
    cfg_ = abf_rescale(cfg_, new_theta, new_max_len);
    rebuild_rope();
  }

  /// Next-token logits for a [batch, seq] token grid; returns [batch, seq, vocab].
  Tensor<S> forward_batch(const std::vector<std::int32_t>& tokens, std::size_t batch,
                          std::size_t seq) const {
    if (tokens.size() != batch * seq) {
      throw std::invalid_argument("forward: token count " + std::to_string(tokens.size()) +
                                  " does not match batch " + std::to_string(batch) + " x seq " +
                                  std::to_string(seq));
    }
    if (seq > cfg_.max_seq_len) {
      throw std::length_error("forward: sequence length " + std::to_string(seq) +
                              " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    }
    Tensor<S> x = motif::embedding(tokens, {batch, seq}, embedding_);
    for (const LayerParams<S>& layer : layers_) {
      Tensor<S> attn_in = rms_norm(x, layer.attn_norm_gain, cfg_.rmsnorm_epsilon);
      x = add(x, diff_attention(attn_in, layer.attn, rope_, /*causal=*/true));
      Tensor<S> ffn_in = rms_norm(x, layer.ffn_norm_gain, cfg_.rmsnorm_epsilon);
      Tensor<S> gated = mul(polynorm(matmul(ffn_in, layer.w_up), layer.poly),
                            matmul(ffn_in, layer.w_gate));
      x = add(x, matmul(gated, layer.w_down));
    }
    if (cfg_.n_layers > 0) x = rms_norm(x, final_norm_gain_, cfg_.rmsnorm_epsilon);
    return matmul(x, embedding_, false, true);  // tied output projection
  }

  /// Single-sequence convenience; returns [seq, vocab].
  Tensor<S> forward(const std::vector<std::int32_t>& tokens) const {
    Tensor<S> logits = forward_batch(tokens, 1, tokens.size());
    return reshape(logits, {tokens.size(), cfg_.vocab_size});
  }

 private:
  void rebuild_rope() {
    RopeParams rp;
    rp.theta = cfg_.rope_theta;
    rp.head_component_dim = cfg_.head_component_dim();
    rp.max_seq_len = cfg_.max_seq_len;
    rope_ = make_rope_table(rp);
  }

  ModelConfig cfg_;
  Tensor<S> embedding_;
  std::vector<LayerParams<S>> layers_;
  Tensor<S> final_norm_gain_;
  RopeTablePtr rope_;
};

/// Mean cross-entropy of logits rows against next-token targets.
template <typename S>
Tensor<S> next_token_loss(const Tensor<S>& logits, const std::vector<std::int32_t>& targets) {
  const std::size_t rows = logits.numel() / logits.extent(logits.rank() - 1);
  if (targets.size() != rows) {
    throw std::invalid_argument("next_token_loss: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " logit rows");
  }
  return cross_entropy_mean(logits, targets);
}

using ModelF = Model<float>;
using ModelD = Model<double>;

}  // namespace motif
