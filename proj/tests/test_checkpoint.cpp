#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "motif/checkpoint.hpp"

using namespace motif;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden_dim = 8;
  c.n_layers = 2;
  c.ffn_dim = 16;
  c.n_heads = 2;
  c.n_kv_heads = 2;
  c.vocab_size = 11;
  c.max_seq_len = 16;
  return c;
}

std::string temp_path(const char* stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

Checkpoint random_checkpoint(std::uint64_t seed, bool with_opt) {
  ModelConfig c = tiny_config();
  Model<float> m(c, seed);
  AdamState<float> st = AdamState<float>::init(m.named_params());
  if (with_opt) {
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> d(0, 0.3);
    for (auto& v : st.m)
      for (auto& x : v) x = float(d(rng));
    for (auto& v : st.v)
      for (auto& x : v) x = float(std::abs(d(rng)));
    st.step = 77;
  }
  return snapshot_model(m, with_opt ? &st : nullptr, 123456789ull, 0x1234567890abcdefull,
                        SchedulePhase::decay);
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
  Checkpoint ck = random_checkpoint(55, true);
  const std::string path = temp_path("motif_ck_roundtrip.bin");
  write_checkpoint(ck, path);
  Checkpoint back = read_checkpoint(path);

  REQUIRE(back.config_fingerprint == ck.config_fingerprint);
  REQUIRE(back.step == ck.step);
  REQUIRE(back.tokens == ck.tokens);
  REQUIRE(back.phase == ck.phase);
  REQUIRE(back.has_opt);
  REQUIRE(back.opt_step == ck.opt_step);
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    REQUIRE(back.params[i].name == ck.params[i].name);
    REQUIRE(back.params[i].shape == ck.params[i].shape);
    REQUIRE(back.params[i].data == ck.params[i].data);  // bit-for-bit as floats
  }
  REQUIRE(back.opt_m == ck.opt_m);
  REQUIRE(back.opt_v == ck.opt_v);

  // writing the read-back checkpoint reproduces the file byte-for-byte
  const std::string path2 = temp_path("motif_ck_roundtrip2.bin");
  write_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(b1 == b2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("corrupted magic is rejected with a structured error") {
  Checkpoint ck = random_checkpoint(56, false);
  const std::string path = temp_path("motif_ck_badmagic.bin");
  write_checkpoint(ck, path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  REQUIRE_THROWS_AS(read_checkpoint(path), CheckpointError);
  REQUIRE_THROWS_WITH(read_checkpoint(path), Catch::Matchers::ContainsSubstring("magic"));
  std::remove(path.c_str());
}

TEST_CASE("truncated checkpoint is rejected") {
  Checkpoint ck = random_checkpoint(57, true);
  const std::string path = temp_path("motif_ck_trunc.bin");
  write_checkpoint(ck, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  REQUIRE_THROWS_AS(read_checkpoint(path), CheckpointError);
  std::remove(path.c_str());
}

TEST_CASE("unsupported version is rejected") {
  Checkpoint ck = random_checkpoint(58, false);
  const std::string path = temp_path("motif_ck_version.bin");
  write_checkpoint(ck, path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    const char bump[4] = {9, 0, 0, 0};
    f.write(bump, 4);
  }
  REQUIRE_THROWS_WITH(read_checkpoint(path), Catch::Matchers::ContainsSubstring("version"));
  std::remove(path.c_str());
}

TEST_CASE("restore rejects fingerprint mismatch") {
  Checkpoint ck = random_checkpoint(59, false);
  ModelConfig other = tiny_config();
  other.ffn_dim = 32;
  Model<float> m(other, 1);
  REQUIRE_THROWS_AS(restore_model(ck, m, nullptr), CheckpointError);
}

TEST_CASE("snapshot then restore reproduces weights and moments") {
  ModelConfig c = tiny_config();
  Model<float> source(c, 61);
  AdamState<float> st = AdamState<float>::init(source.named_params());
  st.step = 5;
  for (auto& v : st.m)
    for (auto& x : v) x = 0.25f;
  Checkpoint ck = snapshot_model(source, &st, 10, 20, SchedulePhase::stable);

  Model<float> target(c, 9999);  // different random init
  AdamState<float> st2 = AdamState<float>::init(target.named_params());
  restore_model(ck, target, &st2);
  REQUIRE(st2.step == 5);
  REQUIRE(st2.m == st.m);
  std::vector<std::int32_t> toks = {1, 2, 3};
  NoGradGuard ng;
  REQUIRE(source.forward(toks).data() == target.forward(toks).data());
}

TEST_CASE("abf changes the fingerprint but not the weight bytes") {
  ModelConfig c = tiny_config();
  Model<float> m(c, 71);
  Checkpoint before = snapshot_model(m, nullptr, 0, 0, SchedulePhase::stable);
  m.apply_abf(500000.0, 64);
  Checkpoint after = snapshot_model(m, nullptr, 0, 0, SchedulePhase::stable);
  REQUIRE(before.config_fingerprint != after.config_fingerprint);
  REQUIRE(before.params.size() == after.params.size());
  for (std::size_t i = 0; i < before.params.size(); ++i) {
    REQUIRE(before.params[i].data == after.params[i].data);
  }
}
