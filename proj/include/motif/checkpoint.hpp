#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "motif/model.hpp"
#include "motif/optim.hpp"

namespace motif {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SchedulePhase : std::uint32_t { warmup = 0, stable = 1, decay = 2, alignment = 3 };

struct TensorEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

/// Named parameter map plus optimizer moments and run metadata; round-trips
/// through the binary format bit-exactly.
struct Checkpoint {
  std::uint64_t config_fingerprint = 0;
  std::uint64_t step = 0;
  std::uint64_t tokens = 0;
  std::uint32_t phase = 0;
  std::vector<TensorEntry> params;
  bool has_opt = false;
  std::vector<std::vector<float>> opt_m, opt_v;  // parallel to params
  std::uint64_t opt_step = 0;
};

inline Checkpoint snapshot_model(Model<float>& model, const AdamState<float>* opt,
                                 std::uint64_t step, std::uint64_t tokens, SchedulePhase phase) {
  Checkpoint ck;
  ck.config_fingerprint = model.config().fingerprint();
  ck.step = step;
  ck.tokens = tokens;
  ck.phase = static_cast<std::uint32_t>(phase);
  model.for_each_param([&](const std::string& name, Tensor<float>& t) {
    ck.params.push_back({name, t.shape(), t.data()});
  });
  if (opt) {
    if (opt->m.size() != ck.params.size()) {
      throw std::invalid_argument("snapshot: optimizer state does not match parameter count");
    }
    ck.has_opt = true;
    ck.opt_m = opt->m;
    ck.opt_v = opt->v;
    ck.opt_step = opt->step;
  }
  return ck;
}

/// Writes checkpoint weights (and moments, when present) into the model.
/// The config fingerprint must match.
inline void restore_model(const Checkpoint& ck, Model<float>& model, AdamState<float>* opt) {
  if (ck.config_fingerprint != model.config().fingerprint()) {
    throw CheckpointError("checkpoint fingerprint " + std::to_string(ck.config_fingerprint) +
                          " does not match model config " +
                          std::to_string(model.config().fingerprint()));
  }
  std::size_t i = 0;
  model.for_each_param([&](const std::string& name, Tensor<float>& t) {
    if (i >= ck.params.size() || ck.params[i].name != name || ck.params[i].shape != t.shape()) {
      throw CheckpointError("checkpoint entry mismatch at parameter " + name);
    }
    t.data() = ck.params[i].data;
    ++i;
  });
  if (i != ck.params.size()) throw CheckpointError("checkpoint has extra parameter entries");
  if (opt) {
    if (!ck.has_opt) throw CheckpointError("checkpoint carries no optimizer state");
    opt->m = ck.opt_m;
    opt->v = ck.opt_v;
    opt->step = ck.opt_step;
  }
}

namespace detail {

constexpr char kMagic[4] = {'M', 'O', 'T', 'F'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class ByteReader {
 public:
  ByteReader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

// 64-bit metadata rides in two raw 32-bit scalar slots.
inline void put_u64_entry(std::string& out, const std::string& name, std::uint64_t v) {
  put_u32(out, std::uint32_t(name.size()));
  out += name;
  put_u32(out, 1);     // rank
  put_u64(out, 2);     // extent
  put_u32(out, std::uint32_t(v & 0xffffffffull));
  put_u32(out, std::uint32_t(v >> 32));
}

inline void put_tensor_entry(std::string& out, const std::string& name, const Shape& shape,
                             const std::vector<float>& data) {
  put_u32(out, std::uint32_t(name.size()));
  out += name;
  put_u32(out, std::uint32_t(shape.size()));
  for (std::size_t e : shape) put_u64(out, e);
  for (float v : data) put_f32(out, v);
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string out;
  out.append(detail::kMagic, 4);
  detail::put_u32(out, detail::kCheckpointVersion);
  detail::put_u64(out, ck.config_fingerprint);
  std::uint64_t entries = ck.params.size() + 3;  // + __meta__ step/tokens/phase
  if (ck.has_opt) entries += 2 * ck.params.size() + 1;
  detail::put_u64(out, entries);
  for (const TensorEntry& e : ck.params) detail::put_tensor_entry(out, e.name, e.shape, e.data);
  if (ck.has_opt) {
    for (std::size_t p = 0; p < ck.params.size(); ++p) {
      detail::put_tensor_entry(out, "__opt_m__/" + ck.params[p].name, ck.params[p].shape,
                               ck.opt_m[p]);
      detail::put_tensor_entry(out, "__opt_v__/" + ck.params[p].name, ck.params[p].shape,
                               ck.opt_v[p]);
    }
    detail::put_u64_entry(out, "__opt_step__", ck.opt_step);
  }
  detail::put_u64_entry(out, "__meta__/step", ck.step);
  detail::put_u64_entry(out, "__meta__/tokens", ck.tokens);
  {
    const std::string name = "__meta__/phase";
    detail::put_u32(out, std::uint32_t(name.size()));
    out += name;
    detail::put_u32(out, 1);
    detail::put_u64(out, 1);
    detail::put_u32(out, ck.phase);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path + " for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw CheckpointError("short write to " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r(bytes);
  const std::string magic = r.str(4);
  if (magic != std::string(detail::kMagic, 4)) {
    throw CheckpointError("bad magic bytes in " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_fingerprint = r.u64();
  const std::uint64_t entries = r.u64();

  std::vector<TensorEntry> opt_m_entries, opt_v_entries;
  bool saw_opt_step = false;
  for (std::uint64_t e = 0; e < entries; ++e) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = r.u64();
      numel *= shape[d];
    }
    std::vector<float> data(numel);
    for (std::size_t i = 0; i < numel; ++i) data[i] = r.f32();
    auto as_u64 = [&]() {
      if (numel != 2) throw CheckpointError("malformed 64-bit entry " + name);
      return std::uint64_t(std::bit_cast<std::uint32_t>(data[0])) |
             (std::uint64_t(std::bit_cast<std::uint32_t>(data[1])) << 32);
    };
    if (name.rfind("__opt_m__/", 0) == 0) {
      opt_m_entries.push_back({name.substr(10), std::move(shape), std::move(data)});
    } else if (name.rfind("__opt_v__/", 0) == 0) {
      opt_v_entries.push_back({name.substr(10), std::move(shape), std::move(data)});
    } else if (name == "__opt_step__") {
      ck.opt_step = as_u64();
      saw_opt_step = true;
    } else if (name == "__meta__/step") {
      ck.step = as_u64();
    } else if (name == "__meta__/tokens") {
      ck.tokens = as_u64();
    } else if (name == "__meta__/phase") {
      if (numel != 1) throw CheckpointError("malformed phase entry");
      ck.phase = std::bit_cast<std::uint32_t>(data[0]);
    } else if (name.rfind("__", 0) == 0) {
      throw CheckpointError("unknown reserved entry " + name);
    } else {
      ck.params.push_back({name, std::move(shape), std::move(data)});
    }
  }
  if (!r.exhausted()) throw CheckpointError("trailing bytes in " + path);
  if (!opt_m_entries.empty() || !opt_v_entries.empty() || saw_opt_step) {
    if (opt_m_entries.size() != ck.params.size() || opt_v_entries.size() != ck.params.size() ||
        !saw_opt_step) {
      throw CheckpointError("incomplete optimizer state in " + path);
    }
    ck.has_opt = true;
    ck.opt_m.resize(ck.params.size());
    ck.opt_v.resize(ck.params.size());
    for (std::size_t p = 0; p < ck.params.size(); ++p) {
      if (opt_m_entries[p].name != ck.params[p].name ||
          opt_v_entries[p].name != ck.params[p].name) {
        throw CheckpointError("optimizer entries out of order in " + path);
      }
      ck.opt_m[p] = std::move(opt_m_entries[p].data);
      ck.opt_v[p] = std::move(opt_v_entries[p].data);
    }
  }
  return ck;
}

}  // namespace motif
