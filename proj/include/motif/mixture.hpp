#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "motif/corpus.hpp"

namespace motif {

/// Linear data-mixture schedule between two eight-group ratio rows.
struct MixtureSchedule {
  std::array<double, kNumGroups> initial_ratios{};
  std::array<double, kNumGroups> final_ratios{};

  void validate() const {
    for (const auto& row : {initial_ratios, final_ratios}) {
      double sum = 0;
      for (double r : row) {
        if (r < 0) throw std::invalid_argument("mixture: ratios must be non-negative");
        sum += r;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("mixture: ratios sum to " + std::to_string(sum) +
                                    ", expected 1");
      }
    }
  }

  /// The production Stage-1 endpoints.
  static MixtureSchedule motif_stage1() {
    MixtureSchedule s;
    s.initial_ratios = {0.68, 0.07, 0.01, 0.06, 0.05, 0.10, 0.02, 0.01};
    s.final_ratios = {0.33, 0.00, 0.30, 0.03, 0.01, 0.18, 0.10, 0.05};
    return s;
  }

  /// Everything from one group; the toy character corpus default.
  static MixtureSchedule single_group(DomainGroup g) {
    MixtureSchedule s;
    s.initial_ratios.fill(0.0);
    s.final_ratios.fill(0.0);
    s.initial_ratios[std::size_t(g)] = 1.0;
    s.final_ratios[std::size_t(g)] = 1.0;
    return s;
  }
};

/// r_g(p) = (1-p) * initial_g + p * final_g; endpoints reproduce the rows
/// exactly.
inline std::array<double, kNumGroups> mixture_ratios_at(double progress,
                                                        const MixtureSchedule& sched) {
  sched.validate();
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw std::domain_error("mixture: progress " + std::to_string(progress) + " outside [0,1]");
  }
  std::array<double, kNumGroups> out{};
  for (std::size_t g = 0; g < kNumGroups; ++g) {
    out[g] = (1.0 - progress) * sched.initial_ratios[g] + progress * sched.final_ratios[g];
  }
  return out;
}

/// Token pools, one stream per domain group.
struct TokenPools {
  std::array<std::vector<std::int32_t>, kNumGroups> groups;

  static TokenPools from_documents(const std::vector<Document>& docs) {
    TokenPools pools;
    for (const Document& d : docs) {
      auto toks = byte_tokenize(d.text);
      auto& dst = pools.groups[std::size_t(d.group)];
      dst.insert(dst.end(), toks.begin(), toks.end());
    }
    return pools;
  }

  bool group_usable(std::size_t g, std::size_t seq_len) const {
    return groups[g].size() >= seq_len + 1;  // inputs plus shifted targets
  }
};

struct SampledBatch {
  std::vector<std::int32_t> inputs;   // n_seqs * seq_len
  std::vector<std::int32_t> targets;  // next-token shift of inputs
  std::size_t n_seqs = 0;
  std::size_t seq_len = 0;
  std::array<double, kNumGroups> realized{};  // token fractions per group
};

/// Draws a batch whose per-group token counts follow
/// mixture_ratios_at(progress) by largest-remainder allocation of sequence
/// slots, so realized ratios sit within seq_len/batch_tokens of the target.
/// Window starts are sampled with the supplied rng; groups with no usable
/// data renormalize the remaining ratios.
inline SampledBatch mixture_sample_batch(const TokenPools& pools, double progress,
                                         const MixtureSchedule& sched, std::size_t batch_tokens,
                                         std::size_t seq_len, std::mt19937_64& rng) {
  if (seq_len == 0 || batch_tokens < seq_len) {
    throw std::invalid_argument("mixture: batch_tokens must cover at least one sequence");
  }
  auto ratios = mixture_ratios_at(progress, sched);
  double live_mass = 0;
  bool any_usable = false;
  for (std::size_t g = 0; g < kNumGroups; ++g) {
    if (!pools.group_usable(g, seq_len)) {
      ratios[g] = 0.0;
    } else {
      any_usable = true;
    }
    live_mass += ratios[g];
  }
  if (!any_usable) throw std::runtime_error("mixture: all pools empty");
  if (live_mass <= 0) {
    // scheduled groups are all empty; spread uniformly over usable ones
    std::size_t usable = 0;
    for (std::size_t g = 0; g < kNumGroups; ++g) usable += pools.group_usable(g, seq_len);
    for (std::size_t g = 0; g < kNumGroups; ++g) {
      ratios[g] = pools.group_usable(g, seq_len) ? 1.0 / double(usable) : 0.0;
    }
  } else {
    for (auto& r : ratios) r /= live_mass;
  }

  const std::size_t n_seqs = batch_tokens / seq_len;
  // largest-remainder allocation of sequence slots
  std::array<std::size_t, kNumGroups> alloc{};
  std::array<double, kNumGroups> remainder{};
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < kNumGroups; ++g) {
    const double quota = ratios[g] * double(n_seqs);
    alloc[g] = std::size_t(std::floor(quota));
    remainder[g] = quota - double(alloc[g]);
    assigned += alloc[g];
  }
  while (assigned < n_seqs) {
    std::size_t best = kNumGroups;
    for (std::size_t g = 0; g < kNumGroups; ++g) {
      if (ratios[g] == 0.0) continue;
      if (best == kNumGroups || remainder[g] > remainder[best]) best = g;
    }
    ++alloc[best];
    remainder[best] = -1;
    ++assigned;
  }

  SampledBatch batch;
  batch.n_seqs = n_seqs;
  batch.seq_len = seq_len;
  batch.inputs.reserve(n_seqs * seq_len);
  batch.targets.reserve(n_seqs * seq_len);
  for (std::size_t g = 0; g < kNumGroups; ++g) {
    const auto& pool = pools.groups[g];
    for (std::size_t s = 0; s < alloc[g]; ++s) {
      std::uniform_int_distribution<std::size_t> dist(0, pool.size() - seq_len - 1);
      const std::size_t start = dist(rng);
      batch.inputs.insert(batch.inputs.end(), pool.begin() + start, pool.begin() + start + seq_len);
      batch.targets.insert(batch.targets.end(), pool.begin() + start + 1,
                           pool.begin() + start + seq_len + 1);
    }
    batch.realized[g] = double(alloc[g]) / double(n_seqs);
  }
  return batch;
}

/// Mixture manifest rows: progress,ratio_0..ratio_7.
inline void write_mixture_manifest(const MixtureSchedule& sched, std::size_t points,
                                   std::ostream& out) {
  out << "progress";
  for (std::size_t g = 0; g < kNumGroups; ++g) out << ",ratio_" << g;
  out << "\n";
  out.precision(10);
  for (std::size_t i = 0; i < points; ++i) {
    const double p = points == 1 ? 0.0 : double(i) / double(points - 1);
    const auto r = mixture_ratios_at(p, sched);
    out << p;
    for (double v : r) out << "," << v;
    out << "\n";
  }
}

}  // namespace motif
