#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "motif/mixture.hpp"

using namespace motif;

TEST_CASE("mixture endpoints reproduce the published rows exactly") {
  auto sched = MixtureSchedule::motif_stage1();
  const std::array<double, 8> initial = {0.68, 0.07, 0.01, 0.06, 0.05, 0.10, 0.02, 0.01};
  const std::array<double, 8> final_row = {0.33, 0.00, 0.30, 0.03, 0.01, 0.18, 0.10, 0.05};
  REQUIRE(mixture_ratios_at(0.0, sched) == initial);
  REQUIRE(mixture_ratios_at(1.0, sched) == final_row);
}

TEST_CASE("mixture midpoint is the linear blend") {
  auto sched = MixtureSchedule::motif_stage1();
  const std::array<double, 8> expected = {0.505, 0.035, 0.155, 0.045, 0.03, 0.14, 0.06, 0.03};
  auto mid = mixture_ratios_at(0.5, sched);
  for (std::size_t g = 0; g < 8; ++g) {
    REQUIRE(mid[g] == Catch::Approx(expected[g]).margin(1e-12));
  }
}

TEST_CASE("mixture ratios sum to one at 1000 sampled progress points") {
  auto sched = MixtureSchedule::motif_stage1();
  for (int i = 0; i <= 1000; ++i) {
    const double p = double(i) / 1000.0;
    auto r = mixture_ratios_at(p, sched);
    double sum = 0;
    for (double v : r) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("mixture ratios sum to one for random valid endpoints") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    MixtureSchedule s;
    for (auto* row : {&s.initial_ratios, &s.final_ratios}) {
      double sum = 0;
      for (auto& v : *row) {
        v = double(rng() % 1000) + 1;
        sum += v;
      }
      for (auto& v : *row) v /= sum;
    }
    for (int i = 0; i <= 100; ++i) {
      auto r = mixture_ratios_at(double(i) / 100.0, s);
      double sum = 0;
      for (double v : r) sum += v;
      REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("mixture rejects out-of-range progress and bad endpoints") {
  auto sched = MixtureSchedule::motif_stage1();
  REQUIRE_THROWS_AS(mixture_ratios_at(-0.01, sched), std::domain_error);
  REQUIRE_THROWS_AS(mixture_ratios_at(1.01, sched), std::domain_error);
  MixtureSchedule bad = sched;
  bad.initial_ratios[0] += 0.5;
  REQUIRE_THROWS_AS(mixture_ratios_at(0.5, bad), std::invalid_argument);
}

namespace {

TokenPools pools_with(std::initializer_list<std::pair<std::size_t, std::size_t>> sizes) {
  TokenPools pools;
  std::mt19937_64 rng(1);
  for (auto [group, n] : sizes) {
    auto& dst = pools.groups[group];
    for (std::size_t i = 0; i < n; ++i) dst.push_back(std::int32_t(rng() % 256));
  }
  return pools;
}

}  // namespace

TEST_CASE("single nonzero ratio draws the whole batch from that group") {
  TokenPools pools = pools_with({{2, 4096}, {5, 4096}});
  auto sched = MixtureSchedule::single_group(DomainGroup::korean);
  std::mt19937_64 rng(3);
  auto batch = mixture_sample_batch(pools, 0.0, sched, 512, 32, rng);
  REQUIRE(batch.realized[2] == 1.0);
  for (std::size_t g = 0; g < 8; ++g) {
    if (g != 2) REQUIRE(batch.realized[g] == 0.0);
  }
  REQUIRE(batch.inputs.size() == 512);
  REQUIRE(batch.targets.size() == 512);
}

TEST_CASE("realized ratios track the schedule within one sequence slot") {
  TokenPools pools;
  std::mt19937_64 fill(9);
  for (std::size_t g = 0; g < 8; ++g) {
    for (int i = 0; i < 4096; ++i) pools.groups[g].push_back(std::int32_t(fill() % 256));
  }
  auto sched = MixtureSchedule::motif_stage1();
  std::mt19937_64 rng(17);
  const std::size_t batch_tokens = 1 << 20, seq_len = 1024;
  auto batch = mixture_sample_batch(pools, 0.0, sched, batch_tokens, seq_len, rng);
  const double slot = double(seq_len) / double(batch_tokens);
  auto target = mixture_ratios_at(0.0, sched);
  for (std::size_t g = 0; g < 8; ++g) {
    REQUIRE(std::abs(batch.realized[g] - target[g]) <= slot + 1e-12);
  }
  REQUIRE(std::abs(batch.realized[0] - 0.68) <= 0.01);

  // mean realized ratio over many batches stays within 3 sigma of the
  // multinomial oracle (largest-remainder allocation is far tighter)
  const int trials = 32;
  std::array<double, 8> mean{};
  for (int t = 0; t < trials; ++t) {
    auto b = mixture_sample_batch(pools, 0.0, sched, 1 << 16, 512, rng);
    for (std::size_t g = 0; g < 8; ++g) mean[g] += b.realized[g];
  }
  const double n_seqs = double((1 << 16) / 512);
  for (std::size_t g = 0; g < 8; ++g) {
    mean[g] /= trials;
    const double sigma =
        std::sqrt(target[g] * (1.0 - target[g]) / (n_seqs * trials));
    REQUIRE(std::abs(mean[g] - target[g]) <= 3.0 * sigma + 1e-9);
  }
}

TEST_CASE("targets are the next-token shift of inputs") {
  TokenPools pools = pools_with({{0, 2048}});
  auto sched = MixtureSchedule::single_group(DomainGroup::general_web);
  std::mt19937_64 rng(5);
  auto batch = mixture_sample_batch(pools, 0.0, sched, 128, 16, rng);
  // every sequence window must occur contiguously in the pool
  const auto& pool = pools.groups[0];
  for (std::size_t s = 0; s < batch.n_seqs; ++s) {
    bool found = false;
    for (std::size_t start = 0; start + 17 <= pool.size() && !found; ++start) {
      bool match = true;
      for (std::size_t i = 0; i < 16 && match; ++i) {
        match = pool[start + i] == batch.inputs[s * 16 + i] &&
                pool[start + i + 1] == batch.targets[s * 16 + i];
      }
      found = match;
    }
    REQUIRE(found);
  }
}

TEST_CASE("empty groups renormalize the remaining ratios") {
  TokenPools pools = pools_with({{0, 4096}, {5, 4096}});  // only web and code usable
  auto sched = MixtureSchedule::motif_stage1();
  std::mt19937_64 rng(7);
  auto batch = mixture_sample_batch(pools, 0.0, sched, 1 << 15, 128, rng);
  // initial web:code = 0.68:0.10 -> renormalized 0.872:0.128
  REQUIRE(batch.realized[0] == Catch::Approx(0.68 / 0.78).margin(0.01));
  REQUIRE(batch.realized[5] == Catch::Approx(0.10 / 0.78).margin(0.01));
  for (std::size_t g : {1u, 2u, 3u, 4u, 6u, 7u}) REQUIRE(batch.realized[g] == 0.0);
}

TEST_CASE("all pools empty is an error") {
  TokenPools pools;
  auto sched = MixtureSchedule::motif_stage1();
  std::mt19937_64 rng(7);
  REQUIRE_THROWS_WITH(mixture_sample_batch(pools, 0.0, sched, 1024, 128, rng),
                      Catch::Matchers::ContainsSubstring("empty"));
}

TEST_CASE("sampling is deterministic under the seed") {
  TokenPools pools = pools_with({{0, 8192}, {3, 8192}});
  MixtureSchedule sched;
  sched.initial_ratios = {0.5, 0, 0, 0.5, 0, 0, 0, 0};
  sched.final_ratios = {0.25, 0, 0, 0.75, 0, 0, 0, 0};
  std::mt19937_64 r1(99), r2(99);
  auto b1 = mixture_sample_batch(pools, 0.3, sched, 2048, 64, r1);
  auto b2 = mixture_sample_batch(pools, 0.3, sched, 2048, 64, r2);
  REQUIRE(b1.inputs == b2.inputs);
  REQUIRE(b1.targets == b2.targets);
}

TEST_CASE("mixture manifest csv") {
  std::ostringstream out;
  write_mixture_manifest(MixtureSchedule::motif_stage1(), 3, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  REQUIRE(header ==
          "progress,ratio_0,ratio_1,ratio_2,ratio_3,ratio_4,ratio_5,ratio_6,ratio_7");
  std::string row;
  std::getline(in, row);
  REQUIRE(row.rfind("0,0.68,", 0) == 0);
  std::getline(in, row);
  std::getline(in, row);
  REQUIRE(row.rfind("1,0.33,", 0) == 0);
}
