#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "motif/checkpoint.hpp"
#include "motif/model.hpp"
#include "motif/optim.hpp"

namespace motif {

/// One preference example: a prompt and a chosen/rejected completion pair.
struct PreferencePair {
  std::vector<std::int32_t> prompt;
  std::vector<std::int32_t> chosen;
  std::vector<std::int32_t> rejected;
};

/// -log sigma(beta * [(pol_c - ref_c) - (pol_r - ref_r)]). The log-prob
/// inputs are summed sequence log-likelihoods; reference terms are plain
/// (untracked) tensors.
template <typename S>
Tensor<S> dpo_loss(const Tensor<S>& policy_chosen, const Tensor<S>& policy_rejected,
                   const Tensor<S>& ref_chosen, const Tensor<S>& ref_rejected, double beta) {
  if (beta <= 0) throw std::invalid_argument("dpo: beta must be positive");
  for (const Tensor<S>* t : {&policy_chosen, &policy_rejected, &ref_chosen, &ref_rejected}) {
    if (t->numel() != 1) throw std::invalid_argument("dpo: log-probs must be scalars");
    if (!std::isfinite(double(t->data()[0]))) {
      throw std::invalid_argument("dpo: non-finite log-prob input");
    }
  }
  Tensor<S> margin = sub(sub(policy_chosen, ref_chosen), sub(policy_rejected, ref_rejected));
  return neg_log_sigmoid(scale(margin, static_cast<S>(beta)));
}

/// Summed log-likelihood of `response` conditioned on `prompt`.
template <typename S>
Tensor<S> response_logprob(const Model<S>& model, const std::vector<std::int32_t>& prompt,
                           const std::vector<std::int32_t>& response) {
  if (prompt.empty() || response.empty()) {
    throw std::invalid_argument("dpo: prompt and response must be non-empty");
  }
  std::vector<std::int32_t> full = prompt;
  full.insert(full.end(), response.begin(), response.end());
  Tensor<S> logits = model.forward(full);
  Tensor<S> rows = slice_dim0(logits, prompt.size() - 1, full.size() - 1);
  return sequence_logprob(rows, response);
}

/// Mean chosen-vs-rejected policy margin, no gradients.
inline double mean_margin(const Model<float>& model, const std::vector<PreferencePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("dpo: empty preference set");
  NoGradGuard ng;
  double acc = 0;
  for (const PreferencePair& p : pairs) {
    acc += double(response_logprob(model, p.prompt, p.chosen).item()) -
           double(response_logprob(model, p.prompt, p.rejected).item());
  }
  return acc / double(pairs.size());
}

struct DpoStageConfig {
  double beta = 0.1;
  double lr = 1e-5;
  std::uint64_t steps = 0;
  std::size_t batch_pairs = 4;
  double holdout_fraction = 0.2;
  std::uint64_t eval_every = 10;
  std::uint64_t seed = 0;
  OptimizerConfig opt = [] {
    OptimizerConfig o;
    o.weight_decay = 0.0;
    o.warmup_steps = 0;
    return o;
  }();
};

struct DpoStageResult {
  Checkpoint best;              // lowest held-out DPO loss
  double initial_holdout = 0;   // ln 2 when policy == reference
  double best_holdout = 0;
  std::uint64_t best_step = 0;
  std::vector<double> holdout_curve;
};

namespace detail {

inline double holdout_dpo_loss(const Model<float>& policy, const Model<float>& reference,
                               const std::vector<PreferencePair>& pairs, double beta) {
  NoGradGuard ng;
  double acc = 0;
  for (const PreferencePair& p : pairs) {
    TensorF pc = response_logprob(policy, p.prompt, p.chosen);
    TensorF pr = response_logprob(policy, p.prompt, p.rejected);
    TensorF rc = response_logprob(reference, p.prompt, p.chosen);
    TensorF rr = response_logprob(reference, p.prompt, p.rejected);
    acc += double(dpo_loss(pc, pr, rc, rr, beta).item());
  }
  return acc / double(pairs.size());
}

}  // namespace detail

/// One DPO alignment stage. Snapshots a frozen reference copy of the model
/// at entry, optimizes the mean DPO loss over the training split, and
/// returns the checkpoint with the lowest held-out DPO loss. The live model
/// is left at its final weights; chain stage two by restoring the returned
/// best checkpoint first.
inline DpoStageResult dpo_stage(Model<float>& model, const std::vector<PreferencePair>& pairs,
                                const DpoStageConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("dpo_stage: empty preference stream");
  if (cfg.beta <= 0) throw std::invalid_argument("dpo_stage: beta must be positive");
  cfg.opt.validate();

  // frozen reference = copy of the policy at stage start
  Model<float> reference(model.config(), 0);
  restore_model(snapshot_model(model, nullptr, 0, 0, SchedulePhase::alignment), reference,
                nullptr);

  // deterministic holdout split
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t holdout_count = std::size_t(std::floor(cfg.holdout_fraction * double(pairs.size())));
  if (pairs.size() >= 2 && holdout_count == 0) holdout_count = 1;
  if (holdout_count >= pairs.size()) holdout_count = pairs.size() - 1;
  std::vector<PreferencePair> train, holdout;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < holdout_count ? holdout : train).push_back(pairs[order[i]]);
  }
  if (holdout.empty()) holdout = train;

  auto params = model.named_params();
  AdamState<float> state = AdamState<float>::init(params);

  DpoStageResult result;
  result.initial_holdout = detail::holdout_dpo_loss(model, reference, holdout, cfg.beta);
  result.best_holdout = result.initial_holdout;
  result.best_step = 0;
  result.best = snapshot_model(model, nullptr, 0, 0, SchedulePhase::alignment);
  result.holdout_curve.push_back(result.initial_holdout);

  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    model.zero_grads();
    TensorF total;
    const std::size_t bsz = std::min(cfg.batch_pairs, train.size());
    for (std::size_t b = 0; b < bsz; ++b) {
      const PreferencePair& p = train[pick(rng)];
      TensorF rc, rr;
      {
        NoGradGuard ng;
        rc = response_logprob(reference, p.prompt, p.chosen);
        rr = response_logprob(reference, p.prompt, p.rejected);
      }
      TensorF pc = response_logprob(model, p.prompt, p.chosen);
      TensorF pr = response_logprob(model, p.prompt, p.rejected);
      TensorF one = dpo_loss(pc, pr, rc, rr, cfg.beta);
      total = b == 0 ? one : add(total, one);
    }
    TensorF loss = scale(total, 1.0f / float(bsz));
    loss.backward();
    clip_grad_norm(params, 1.0);
    adamw_step(params, state, cfg.lr, cfg.opt);

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const double held = detail::holdout_dpo_loss(model, reference, holdout, cfg.beta);
      result.holdout_curve.push_back(held);
      if (held < result.best_holdout) {
        result.best_holdout = held;
        result.best_step = step;
        result.best = snapshot_model(model, nullptr, step, 0, SchedulePhase::alignment);
        result.best.step = step;
      }
    }
  }
  return result;
}

}  // namespace motif
