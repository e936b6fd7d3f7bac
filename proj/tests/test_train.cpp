#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "motif/train.hpp"

using namespace motif;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden_dim = 32;
  c.n_layers = 2;
  c.ffn_dim = 64;
  c.n_heads = 2;
  c.n_kv_heads = 2;
  c.vocab_size = 256;
  c.max_seq_len = 64;
  return c;
}

TokenPools synthetic_pools(std::size_t n_tokens, std::uint64_t seed) {
  // repetitive byte patterns a small model can learn quickly
  TokenPools pools;
  std::mt19937_64 rng(seed);
  std::string text;
  const char* words[] = {"alpha ", "beta ", "gamma ", "delta ", "omega "};
  while (text.size() < n_tokens) {
    text += words[rng() % 5];
  }
  pools.groups[0] = byte_tokenize(text);
  return pools;
}

TrainOptions small_options(std::uint64_t steps) {
  TrainOptions o;
  o.steps = steps;
  o.batch_tokens = 256;
  o.seq_len = 32;
  o.seed = 7;
  o.wsd.warmup = 512;
  o.wsd.stable_end = 4096;
  o.wsd.total = 16384;
  o.opt.warmup_steps = 2;
  return o;
}

Checkpoint perturbed_checkpoint(std::uint64_t seed, std::uint64_t step) {
  Model<float> m(small_config(), seed);
  Checkpoint ck = snapshot_model(m, nullptr, step, step * 100, SchedulePhase::stable);
  return ck;
}

}  // namespace

TEST_CASE("sma of six identical checkpoints is the checkpoint") {
  Checkpoint base = perturbed_checkpoint(3, 10);
  std::vector<Checkpoint> six(6, base);
  Checkpoint avg = sma_average(six);
  for (std::size_t p = 0; p < base.params.size(); ++p) {
    for (std::size_t i = 0; i < base.params[p].data.size(); ++i) {
      REQUIRE(std::abs(avg.params[p].data[i] - base.params[p].data[i]) <= 1e-7f);
    }
  }
}

TEST_CASE("sma of w and minus w is zero") {
  Checkpoint a = perturbed_checkpoint(5, 1);
  Checkpoint b = a;
  b.step = 2;
  for (auto& e : b.params)
    for (auto& v : e.data) v = -v;
  Checkpoint avg = sma_average({a, b});
  for (const auto& e : avg.params) {
    for (float v : e.data) REQUIRE(v == 0.0f);
  }
}

TEST_CASE("sma of six random checkpoints matches the per-scalar mean oracle") {
  std::vector<Checkpoint> six;
  for (std::uint64_t s = 0; s < 6; ++s) six.push_back(perturbed_checkpoint(100 + s, s));
  Checkpoint avg = sma_average(six);
  for (std::size_t p = 0; p < avg.params.size(); ++p) {
    for (std::size_t i = 0; i < avg.params[p].data.size(); ++i) {
      double mean = 0;  // independent brute-force mean
      for (const Checkpoint& ck : six) mean += ck.params[p].data[i];
      mean /= 6.0;
      REQUIRE(std::abs(double(avg.params[p].data[i]) - mean) <= 1e-7);
    }
  }
  // metadata comes from the newest checkpoint
  REQUIRE(avg.step == 5);
}

TEST_CASE("sma is permutation invariant") {
  std::vector<Checkpoint> six;
  for (std::uint64_t s = 0; s < 6; ++s) six.push_back(perturbed_checkpoint(200 + s, s));
  Checkpoint a = sma_average(six);
  std::vector<Checkpoint> shuffled = {six[3], six[0], six[5], six[1], six[4], six[2]};
  Checkpoint b = sma_average(shuffled);
  REQUIRE(a.step == b.step);
  for (std::size_t p = 0; p < a.params.size(); ++p) {
    REQUIRE(a.params[p].data == b.params[p].data);
  }
}

TEST_CASE("sma rejects fingerprint mismatches") {
  Checkpoint a = perturbed_checkpoint(1, 1);
  Checkpoint b = a;
  b.config_fingerprint ^= 0xdeadbeef;
  REQUIRE_THROWS_WITH(sma_average({a, b}), Catch::Matchers::ContainsSubstring("fingerprint"));
}

TEST_CASE("short training run reduces loss and is bit-deterministic") {
  TokenPools pools = synthetic_pools(1 << 14, 11);
  auto run = [&] {
    Model<float> m(small_config(), 21);
    return train_loop(m, pools, small_options(30));
  };
  TrainResult r1 = run();
  REQUIRE_FALSE(r1.aborted);
  REQUIRE(r1.log.size() == 30);
  // repetitive corpus: the mean of the last five losses beats the first loss
  double tail = 0;
  for (std::size_t i = 25; i < 30; ++i) tail += r1.log[i].loss;
  tail /= 5;
  REQUIRE(tail < r1.log.front().loss);

  TrainResult r2 = run();
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    REQUIRE(r1.log[i].loss == r2.log[i].loss);
    REQUIRE(r1.log[i].lr == r2.log[i].lr);
    REQUIRE(r1.log[i].grad_norm == r2.log[i].grad_norm);
  }
  for (std::size_t p = 0; p < r1.final_checkpoint.params.size(); ++p) {
    REQUIRE(r1.final_checkpoint.params[p].data == r2.final_checkpoint.params[p].data);
  }
}

TEST_CASE("sma disabled equals window of one") {
  TokenPools pools = synthetic_pools(1 << 14, 13);
  TrainOptions base = small_options(20);
  TrainOptions with_sma = base;
  SmaConfig sma;
  sma.window = 1;
  sma.interval_tokens = 1024;
  with_sma.sma = sma;

  Model<float> m1(small_config(), 5);
  TrainResult r1 = train_loop(m1, pools, base);
  Model<float> m2(small_config(), 5);
  TrainResult r2 = train_loop(m2, pools, with_sma);
  for (std::size_t p = 0; p < r1.final_checkpoint.params.size(); ++p) {
    REQUIRE(r1.final_checkpoint.params[p].data == r2.final_checkpoint.params[p].data);
  }
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    REQUIRE(r1.log[i].loss == r2.log[i].loss);
  }
}

TEST_CASE("sma feedback actually rewrites live weights") {
  TokenPools pools = synthetic_pools(1 << 14, 17);
  TrainOptions base = small_options(20);
  TrainOptions with_sma = base;
  SmaConfig sma;
  sma.window = 4;
  sma.interval_tokens = 2048;  // snapshots every 512 tokens = every 2 steps
  with_sma.sma = sma;
  Model<float> m1(small_config(), 5);
  TrainResult r1 = train_loop(m1, pools, base);
  Model<float> m2(small_config(), 5);
  TrainResult r2 = train_loop(m2, pools, with_sma);
  bool any_diff = false;
  for (std::size_t p = 0; p < r1.final_checkpoint.params.size(); ++p) {
    any_diff = any_diff || r1.final_checkpoint.params[p].data != r2.final_checkpoint.params[p].data;
  }
  REQUIRE(any_diff);
}

TEST_CASE("non-finite loss aborts with the last good checkpoint") {
  TokenPools pools = synthetic_pools(1 << 14, 19);
  TrainOptions opts = small_options(200);
  opts.opt.peak_lr = 1e6;  // diverges fast
  opts.grad_clip = 1e18;
  Model<float> m(small_config(), 33);
  TrainResult r = train_loop(m, pools, opts);
  REQUIRE(r.aborted);
  REQUIRE_FALSE(r.abort_reason.empty());
  REQUIRE(r.log.size() < 200);
  for (const auto& e : r.final_checkpoint.params) {
    for (float v : e.data) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("metrics csv carries the schedule columns") {
  TokenPools pools = synthetic_pools(1 << 13, 23);
  TrainOptions opts = small_options(4);
  Model<float> m(small_config(), 3);
  TrainResult r = train_loop(m, pools, opts);
  std::ostringstream out;
  write_metrics_csv(r.log, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  REQUIRE(header ==
          "step,tokens,lr,loss,grad_norm,ratio_0,ratio_1,ratio_2,ratio_3,ratio_4,ratio_5,"
          "ratio_6,ratio_7");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  REQUIRE(rows == 4);
}
