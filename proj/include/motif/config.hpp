#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

#include "motif/common.hpp"

namespace motif {

/// Architecture hyper-parameters governing shapes, RoPE base and norms.
struct ModelConfig {
  std::size_t hidden_dim = 0;
  std::size_t n_layers = 0;
  std::size_t ffn_dim = 0;
  std::size_t n_heads = 0;
  std::size_t n_kv_heads = 0;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 0;
  double rope_theta = 10000.0;
  bool tied_embeddings = true;
  double polynorm_epsilon = 1e-6;
  double rmsnorm_epsilon = 1e-6;

  /// The production 2.6B configuration.
  static ModelConfig motif_2_6b() {
    ModelConfig c;
    c.hidden_dim = 2048;
    c.n_layers = 32;
    c.ffn_dim = 8192;
    c.n_heads = 16;
    c.n_kv_heads = 16;
    c.vocab_size = 219520;
    c.max_seq_len = 4096;
    c.rope_theta = 500000.0;
    return c;
  }

  /// Minutes-scale CPU configuration used throughout the tests.
  static ModelConfig toy() {
    ModelConfig c;
    c.hidden_dim = 128;
    c.n_layers = 4;
    c.ffn_dim = 512;
    c.n_heads = 4;
    c.n_kv_heads = 4;
    c.vocab_size = 256;
    c.max_seq_len = 512;
    c.rope_theta = 10000.0;
    return c;
  }

  std::size_t head_component_dim() const { return hidden_dim / (2 * n_heads); }
  std::size_t head_value_dim() const { return hidden_dim / n_heads; }

  std::uint64_t fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << "hidden=" << hidden_dim << ";layers=" << n_layers << ";ffn=" << ffn_dim
       << ";heads=" << n_heads << ";kv_heads=" << n_kv_heads << ";vocab=" << vocab_size
       << ";max_seq=" << max_seq_len << ";theta=" << rope_theta << ";tied=" << tied_embeddings
       << ";poly_eps=" << polynorm_epsilon << ";rms_eps=" << rmsnorm_epsilon;
    return fnv1a64(os.str());
  }
};

/// Returns silently iff every config invariant holds; otherwise throws
/// naming the violated field and constraint.
inline void validate_config(const ModelConfig& c) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (c.hidden_dim == 0) fail("hidden_dim must be positive");
  if (c.ffn_dim == 0) fail("ffn_dim must be positive");
  if (c.n_heads == 0) fail("n_heads must be positive");
  if (c.vocab_size == 0) fail("vocab_size must be positive");
  if (c.max_seq_len == 0) fail("max_seq_len must be positive");
  if (c.n_kv_heads != c.n_heads) {
    fail("n_kv_heads (" + std::to_string(c.n_kv_heads) + ") must equal n_heads (" +
         std::to_string(c.n_heads) + ")");
  }
  if (c.hidden_dim % (2 * c.n_heads) != 0) {
    fail("hidden_dim (" + std::to_string(c.hidden_dim) + ") must be divisible by 2*n_heads (" +
         std::to_string(2 * c.n_heads) + ")");
  }
  if ((c.hidden_dim / (2 * c.n_heads)) % 2 != 0) {
    fail("head component dim (" + std::to_string(c.hidden_dim / (2 * c.n_heads)) +
         ") must be even to hold rotary pairs");
  }
  if (c.rope_theta <= 0) fail("rope_theta must be positive");
  if (c.polynorm_epsilon <= 0) fail("polynorm_epsilon must be positive");
  if (c.rmsnorm_epsilon <= 0) fail("rmsnorm_epsilon must be positive");
}

struct ParamCount {
  std::uint64_t total = 0;
  std::uint64_t non_embedding = 0;
};

/// Closed-form scalar count; equals the enumeration of an instantiated
/// model exactly. A zero-layer config degenerates to embeddings only.
inline ParamCount count_parameters(const ModelConfig& c) {
  validate_config(c);
  const std::uint64_t d = c.hidden_dim;
  const std::uint64_t per_layer = 4 * d * d               // attention projections
                                  + 3 * d * c.ffn_dim     // gated FFN
                                  + 2 * d                 // pre-norm gains
                                  + d                     // per-head norm gains
                                  + 4 * (d / (2 * c.n_heads))  // lambda vectors
                                  + 4;                    // polynorm coefficients + bias
  ParamCount out;
  out.non_embedding = per_layer * c.n_layers + (c.n_layers > 0 ? d : 0);
  const std::uint64_t embed = std::uint64_t(c.vocab_size) * d;
  out.total = out.non_embedding + (c.tied_embeddings ? embed : 2 * embed);
  return out;
}

/// Adjusted-base-frequency context extension: raises the RoPE base and the
/// maximum sequence length, leaving every learned weight untouched.
inline ModelConfig abf_rescale(const ModelConfig& c, double new_theta, std::size_t new_max_len) {
  if (new_theta < c.rope_theta) {
    throw std::invalid_argument("abf_rescale: new theta " + std::to_string(new_theta) +
                                " below current " + std::to_string(c.rope_theta));
  }
  if (new_max_len < c.max_seq_len) {
    throw std::invalid_argument("abf_rescale: new max_seq_len " + std::to_string(new_max_len) +
                                " below current " + std::to_string(c.max_seq_len));
  }
  ModelConfig out = c;
  out.rope_theta = new_theta;
  out.max_seq_len = new_max_len;
  return out;
}

}  // namespace motif
