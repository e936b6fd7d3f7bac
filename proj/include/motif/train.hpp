#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "motif/checkpoint.hpp"
#include "motif/mixture.hpp"
#include "motif/model.hpp"
#include "motif/optim.hpp"

namespace motif {

/// Simple-Moving-Average feedback: every interval tokens the most recent
/// `window` snapshots (spaced interval/window apart) are averaged and fed
/// back into the live model.
struct SmaConfig {
  std::size_t window = 6;
  std::uint64_t interval_tokens = 8000000000ull;  // paper scale; toy runs override

  void validate() const {
    if (window < 1) throw std::invalid_argument("sma: window must be >= 1");
    if (interval_tokens == 0) throw std::invalid_argument("sma: interval must be positive");
  }
};

/// Element-wise mean of the checkpoints' parameters. Metadata and optimizer
/// moments are carried from the newest checkpoint unchanged. Order-free.
inline Checkpoint sma_average(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("sma_average: no checkpoints");
  const Checkpoint& first = checkpoints.front();
  std::size_t newest = 0;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const Checkpoint& ck = checkpoints[i];
    if (ck.config_fingerprint != first.config_fingerprint) {
      throw std::invalid_argument("sma_average: config fingerprint mismatch between checkpoints");
    }
    if (ck.params.size() != first.params.size()) {
      throw std::invalid_argument("sma_average: parameter sets differ");
    }
    for (std::size_t p = 0; p < ck.params.size(); ++p) {
      if (ck.params[p].name != first.params[p].name ||
          ck.params[p].shape != first.params[p].shape) {
        throw std::invalid_argument("sma_average: parameter mismatch at " + ck.params[p].name);
      }
    }
    if (std::pair(ck.step, ck.tokens) >= std::pair(checkpoints[newest].step,
                                                   checkpoints[newest].tokens)) {
      newest = i;
    }
  }
  Checkpoint out = checkpoints[newest];
  const double inv = 1.0 / double(checkpoints.size());
  for (std::size_t p = 0; p < out.params.size(); ++p) {
    auto& dst = out.params[p].data;
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double acc = 0;
      for (const Checkpoint& ck : checkpoints) acc += double(ck.params[p].data[i]);
      dst[i] = static_cast<float>(acc * inv);
    }
  }
  return out;
}

struct MetricsRow {
  std::uint64_t step = 0;
  std::uint64_t tokens = 0;
  double lr = 0;
  double loss = 0;
  double grad_norm = 0;
  std::array<double, kNumGroups> ratios{};
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
  out << "step,tokens,lr,loss,grad_norm";
  for (std::size_t g = 0; g < kNumGroups; ++g) out << ",ratio_" << g;
  out << "\n";
  out.precision(10);
  for (const MetricsRow& r : rows) {
    out << r.step << "," << r.tokens << "," << r.lr << "," << r.loss << "," << r.grad_norm;
    for (double v : r.ratios) out << "," << v;
    out << "\n";
  }
}

struct TrainOptions {
  std::uint64_t steps = 0;
  std::size_t batch_tokens = 8192;
  std::size_t seq_len = 128;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  WsdSchedule wsd;  // progress measured in tokens
  OptimizerConfig opt;
  MixtureSchedule mixture = MixtureSchedule::single_group(DomainGroup::general_web);
  std::optional<SmaConfig> sma;
  std::uint64_t start_step = 0;
  std::uint64_t start_tokens = 0;
  std::string metrics_path;  // when set, the CSV log is written here
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<MetricsRow> log;
  bool aborted = false;
  std::string abort_reason;
};

inline SchedulePhase phase_at(double tokens, const WsdSchedule& wsd) {
  if (tokens < wsd.warmup) return SchedulePhase::warmup;
  if (tokens <= wsd.stable_end) return SchedulePhase::stable;
  return SchedulePhase::decay;
}

/// The pre-training loop: mixture-scheduled batches, AdamW at the WSD rate,
/// global-norm clipping, optional SMA feedback. Bit-deterministic for a
/// fixed seed. A non-finite loss aborts with the last good weights intact.
inline TrainResult train_loop(Model<float>& model, const TokenPools& pools,
                              const TrainOptions& opts, AdamState<float>* resume_state = nullptr) {
  opts.wsd.validate();
  opts.opt.validate();
  opts.mixture.validate();
  if (opts.sma) opts.sma->validate();

  auto params = model.named_params();
  AdamState<float> local_state = AdamState<float>::init(params);
  AdamState<float>& state = resume_state ? *resume_state : local_state;

  std::mt19937_64 rng(opts.seed);
  TrainResult result;
  std::uint64_t step = opts.start_step;
  std::uint64_t tokens = opts.start_tokens;

  // SMA ring: snapshots every interval/window tokens
  std::deque<Checkpoint> ring;
  std::uint64_t snapshot_spacing = 0, next_snapshot = 0, next_feedback = 0;
  if (opts.sma) {
    snapshot_spacing = std::max<std::uint64_t>(1, opts.sma->interval_tokens / opts.sma->window);
    next_snapshot = tokens + snapshot_spacing;
    next_feedback = tokens + opts.sma->interval_tokens;
  }

  auto finalize = [&](bool aborted, const std::string& reason) {
    result.aborted = aborted;
    result.abort_reason = reason;
    result.final_checkpoint =
        snapshot_model(model, &state, step, tokens, phase_at(double(tokens), opts.wsd));
    if (!opts.metrics_path.empty()) {
      std::ofstream f(opts.metrics_path, std::ios::trunc);
      if (!f) throw std::runtime_error("cannot open metrics path " + opts.metrics_path);
      write_metrics_csv(result.log, f);
    }
    return result;
  };

  for (std::uint64_t s = 0; s < opts.steps; ++s) {
    const double mix_progress =
        std::min(1.0, opts.wsd.total > 0 ? double(tokens) / opts.wsd.total : 0.0);
    SampledBatch batch = mixture_sample_batch(pools, mix_progress, opts.mixture,
                                              opts.batch_tokens, opts.seq_len, rng);
    TensorF logits = model.forward_batch(batch.inputs, batch.n_seqs, batch.seq_len);
    TensorF loss = next_token_loss(logits, batch.targets);
    const double loss_value = double(loss.item());
    if (!std::isfinite(loss_value)) {
      // weights were not touched this step; they are the last good state
      return finalize(true, "non-finite loss at step " + std::to_string(step + 1));
    }
    model.zero_grads();
    loss.backward();
    const double grad_norm = clip_grad_norm(params, opts.grad_clip);

    tokens += batch.n_seqs * batch.seq_len;
    step += 1;
    const double lr = wsd_lr(std::min(double(tokens), opts.wsd.total), opts.wsd, opts.opt);
    try {
      adamw_step(params, state, lr, opts.opt);
    } catch (const std::runtime_error& e) {
      return finalize(true, e.what());
    }

    MetricsRow row;
    row.step = step;
    row.tokens = tokens;
    row.lr = lr;
    row.loss = loss_value;
    row.grad_norm = grad_norm;
    row.ratios = batch.realized;
    result.log.push_back(row);

    if (opts.sma) {
      while (tokens >= next_snapshot) {
        ring.push_back(snapshot_model(model, nullptr, step, tokens,
                                      phase_at(double(tokens), opts.wsd)));
        while (ring.size() > opts.sma->window) ring.pop_front();
        next_snapshot += snapshot_spacing;
      }
      while (tokens >= next_feedback) {
        if (ring.size() == opts.sma->window) {
          Checkpoint averaged = sma_average({ring.begin(), ring.end()});
          restore_model(averaged, model, nullptr);  // moments carry over unchanged
        }
        next_feedback += opts.sma->interval_tokens;
      }
    }
  }
  return finalize(false, "");
}

}  // namespace motif
