#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "motif/tensor.hpp"

namespace motif {

/// Rotary-embedding configuration. Pair i of a head component rotates at
/// frequency theta^(-2i/head_component_dim).
struct RopeParams {
  double theta = 10000.0;
  std::size_t head_component_dim = 0;
  std::size_t max_seq_len = 0;

  void validate() const {
    if (theta <= 0) throw std::invalid_argument("rope: theta must be positive");
    if (head_component_dim == 0 || head_component_dim % 2 != 0) {
      throw std::invalid_argument("rope: head_component_dim must be even and positive, got " +
                                  std::to_string(head_component_dim));
    }
    if (max_seq_len == 0) throw std::invalid_argument("rope: max_seq_len must be positive");
  }
};

/// Per-pair frequencies, length head_component_dim/2, strictly decreasing.
inline std::vector<double> rope_frequencies(const RopeParams& params) {
  params.validate();
  const std::size_t half = params.head_component_dim / 2;
  std::vector<double> freqs(half);
  for (std::size_t i = 0; i < half; ++i) {
    freqs[i] = std::pow(params.theta, -2.0 * double(i) / double(params.head_component_dim));
  }
  return freqs;
}

/// Precomputed rotation angles for all positions up to max_seq_len. Shared
/// by reference from the tape, hence handled through shared_ptr.
class RopeTable {
 public:
  explicit RopeTable(const RopeParams& params)
      : params_(params), half_(params.head_component_dim / 2) {
    params.validate();
    const auto freqs = rope_frequencies(params);
    cos_.resize(params.max_seq_len * half_);
    sin_.resize(params.max_seq_len * half_);
    for (std::size_t pos = 0; pos < params.max_seq_len; ++pos) {
      for (std::size_t i = 0; i < half_; ++i) {
        const double angle = double(pos) * freqs[i];
        cos_[pos * half_ + i] = std::cos(angle);
        sin_[pos * half_ + i] = std::sin(angle);
      }
    }
  }

  const RopeParams& params() const { return params_; }
  std::size_t half() const { return half_; }
  double cos_at(std::size_t pos, std::size_t i) const { return cos_[pos * half_ + i]; }
  double sin_at(std::size_t pos, std::size_t i) const { return sin_[pos * half_ + i]; }

 private:
  RopeParams params_;
  std::size_t half_;
  std::vector<double> cos_, sin_;
};

using RopeTablePtr = std::shared_ptr<const RopeTable>;

inline RopeTablePtr make_rope_table(const RopeParams& params) {
  return std::make_shared<RopeTable>(params);
}

namespace detail {

// Rotates adjacent pairs along the last dim; the position of an element is
// taken from the dimension at `seq_axis`. invert=true applies the inverse
// rotation (used by the backward pass).
template <typename S>
void rope_kernel(const S* in, S* out, const Shape& shape, std::size_t seq_axis,
                 std::size_t offset, const RopeTable& table, bool invert, bool add) {
  const std::size_t rank = shape.size();
  const std::size_t comp = shape[rank - 1];
  std::size_t seq_stride = 1;  // stride of seq_axis in units of comp-rows
  for (std::size_t d = seq_axis + 1; d + 1 < rank; ++d) seq_stride *= shape[d];
  const std::size_t seq = shape[seq_axis];
  const std::size_t rows = shape_numel(shape) / comp;
  auto body = [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const std::size_t pos = offset + (r / seq_stride) % seq;
      const S* x = in + r * comp;
      S* y = out + r * comp;
      for (std::size_t i = 0; i < comp / 2; ++i) {
        const S c = static_cast<S>(table.cos_at(pos, i));
        const S s = static_cast<S>(invert ? -table.sin_at(pos, i) : table.sin_at(pos, i));
        const S x0 = x[2 * i], x1 = x[2 * i + 1];
        if (add) {
          y[2 * i] += x0 * c - x1 * s;
          y[2 * i + 1] += x0 * s + x1 * c;
        } else {
          y[2 * i] = x0 * c - x1 * s;
          y[2 * i + 1] = x0 * s + x1 * c;
        }
      }
    }
  };
  if (rows * comp >= kParallelCutoff) parallel_for(rows, body);
  else body(0, rows);
}

template <typename S>
Tensor<S> rope_apply_axis(const Tensor<S>& x, std::size_t seq_axis, std::size_t offset,
                          const RopeTablePtr& table) {
  const RopeParams& p = table->params();
  if (x.extent(x.rank() - 1) != p.head_component_dim) {
    throw std::invalid_argument("rope: component dim of " + shape_str(x.shape()) +
                                " does not match head_component_dim " +
                                std::to_string(p.head_component_dim));
  }
  const std::size_t seq = x.extent(seq_axis);
  if (offset + seq > p.max_seq_len) {
    throw std::length_error("rope: sequence of " + std::to_string(seq) + " at offset " +
                            std::to_string(offset) + " exceeds max_seq_len " +
                            std::to_string(p.max_seq_len));
  }
  Tensor<S> out = Tensor<S>::make(x.shape(), "rope");
  rope_kernel(x.data().data(), out.data().data(), x.shape(), seq_axis, offset, *table, false,
              false);
  out.attach({x}, [seq_axis, offset, table](const TensorNode<S>& self) {
    const Tensor<S>& parent = self.parents[0];
    if (!parent.requires_grad()) return;
    parent.node()->ensure_grad();
    rope_kernel(self.grad->data(), parent.node()->grad->data(), self.shape, seq_axis, offset,
                *table, true, true);
  });
  return out;
}

}  // namespace detail

/// Applies rotary embedding to x of shape [seq, heads, comp_dim].
template <typename S>
Tensor<S> rope_apply(const Tensor<S>& x, std::size_t position_offset, const RopeTablePtr& table) {
  if (x.rank() != 3) {
    throw std::invalid_argument("rope_apply: expected [seq, heads, comp], got " +
                                shape_str(x.shape()));
  }
  return detail::rope_apply_axis(x, 0, position_offset, table);
}

template <typename S>
Tensor<S> rope_apply(const Tensor<S>& x, std::size_t position_offset, const RopeParams& params) {
  return rope_apply(x, position_offset, make_rope_table(params));
}

/// Variant for attention-internal layout [..., seq, comp_dim] with the
/// sequence on the second-to-last dimension.
template <typename S>
Tensor<S> rope_apply_seq_minor(const Tensor<S>& x, std::size_t position_offset,
                               const RopeTablePtr& table) {
  if (x.rank() < 2) throw std::invalid_argument("rope_apply_seq_minor: rank must be >= 2");
  return detail::rope_apply_axis(x, x.rank() - 2, position_offset, table);
}

}  // namespace motif
