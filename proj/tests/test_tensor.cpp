#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "motif/tensor.hpp"

using namespace motif;

TEST_CASE("matmul identity") {
  TensorD eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  std::mt19937_64 rng(1);
  TensorD a = TensorD::randn({3, 4}, rng);
  TensorD out = matmul(eye, a);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    REQUIRE(out.data()[i] == Catch::Approx(a.data()[i]).margin(1e-15));
  }
}

TEST_CASE("matmul hand arithmetic") {
  TensorD a({2, 2}, {1, 2, 3, 4});
  TensorD b({2, 1}, {1, 1});
  TensorD c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 1});
  REQUIRE(c.data()[0] == 3.0);
  REQUIRE(c.data()[1] == 7.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  TensorD a({2, 3});
  TensorD b({4, 2});
  REQUIRE_THROWS_WITH(matmul(a, b),
                      Catch::Matchers::ContainsSubstring("[2,3]") &&
                          Catch::Matchers::ContainsSubstring("[4,2]"));
}

TEST_CASE("matmul gradient vs finite differences") {
  std::mt19937_64 rng(7);
  TensorD a = TensorD::randn({5, 7}, rng);
  TensorD b = TensorD::randn({7, 3}, rng);

  double err_a = grad_check([&](const TensorD& x) { return sum_all(matmul(x, b)); }, a);
  double err_b = grad_check([&](const TensorD& x) { return sum_all(matmul(a, x)); }, b);
  REQUIRE(err_a < 1e-6);
  REQUIRE(err_b < 1e-6);

  // weighted loss exercises nontrivial output gradients
  TensorD w = TensorD::randn({5, 3}, rng);
  double err = grad_check([&](const TensorD& x) { return sum_all(mul(matmul(x, b), w)); }, a);
  REQUIRE(err < 1e-6);
}

TEST_CASE("matmul transpose flags and batching") {
  std::mt19937_64 rng(11);
  TensorD a = TensorD::randn({2, 3, 4, 5}, rng);  // [B,H,m,k]
  TensorD b = TensorD::randn({2, 3, 6, 5}, rng);  // [B,H,n,k]
  TensorD c = matmul(a, b, false, true);
  REQUIRE(c.shape() == Shape{2, 3, 4, 6});
  // brute-force oracle
  for (std::size_t l = 0; l < 6; ++l) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < 5; ++k) {
          acc += a.data()[(l * 4 + i) * 5 + k] * b.data()[(l * 6 + j) * 5 + k];
        }
        REQUIRE(c.data()[(l * 4 + i) * 6 + j] == Catch::Approx(acc).epsilon(1e-12));
      }
    }
  }
  double err = grad_check(
      [&](const TensorD& x) { return sum_all(matmul(x, b, false, true)); }, a);
  REQUIRE(err < 1e-6);
  double err2 = grad_check(
      [&](const TensorD& x) { return sum_all(matmul(a, x, false, true)); }, b);
  REQUIRE(err2 < 1e-6);
}

TEST_CASE("matmul batched times shared weight") {
  std::mt19937_64 rng(13);
  TensorD x = TensorD::randn({3, 4, 5}, rng);
  TensorD w = TensorD::randn({5, 6}, rng);
  TensorD y = matmul(x, w);
  REQUIRE(y.shape() == Shape{3, 4, 6});
  TensorD coef = TensorD::randn({3, 4, 6}, rng);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(matmul(t, w), coef)); }, x) < 1e-6);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(matmul(x, t), coef)); }, w) < 1e-6);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(matmul(x, t, false, true), coef)); },
                     TensorD::randn({6, 5}, rng)) < 1e-6);
}

TEST_CASE("softmax of uniform row is uniform") {
  TensorD x({3}, {0, 0, 0});
  TensorD y = softmax_lastdim(x);
  for (double v : y.data()) REQUIRE(v == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax large magnitudes do not overflow") {
  TensorD x({2}, {1000, 1000});
  TensorD y = softmax_lastdim(x);
  REQUIRE(y.data()[0] == Catch::Approx(0.5).epsilon(1e-12));
  REQUIRE(y.data()[1] == Catch::Approx(0.5).epsilon(1e-12));

  // rows sum to one even at magnitude 1e3 with mixed signs
  std::mt19937_64 rng(3);
  TensorD big = TensorD::uniform({8, 16}, rng, -1e3, 1e3);
  TensorD sy = softmax_lastdim(big);
  for (std::size_t r = 0; r < 8; ++r) {
    double sum = 0;
    for (std::size_t j = 0; j < 16; ++j) sum += sy.data()[r * 16 + j];
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("softmax gradient") {
  std::mt19937_64 rng(5);
  TensorD x = TensorD::randn({4, 6}, rng);
  TensorD w = TensorD::randn({4, 6}, rng);
  double err = grad_check(
      [&](const TensorD& t) { return sum_all(mul(softmax_lastdim(t), w)); }, x);
  REQUIRE(err < 1e-6);
}

TEST_CASE("softmax masking") {
  TensorD x({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorD mask({2, 3}, {1, 1, 0, 1, 0, 0});
  TensorD y = softmax_lastdim(x, &mask);
  REQUIRE(y.data()[2] == 0.0);
  REQUIRE(y.data()[0] + y.data()[1] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(y.data()[3] == 1.0);
  REQUIRE(y.data()[4] == 0.0);

  TensorD dead_mask({2, 3}, {1, 1, 1, 0, 0, 0});
  REQUIRE_THROWS_AS(softmax_lastdim(x, &dead_mask), std::domain_error);
}

TEST_CASE("rms_norm of ones is ones") {
  TensorD x = TensorD::ones({2, 4});
  TensorD g = TensorD::ones({4});
  TensorD y = rms_norm(x, g, 1e-12);
  for (double v : y.data()) REQUIRE(v == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("rms_norm of zeros is zeros") {
  TensorD x = TensorD::zeros({3, 5});
  TensorD g = TensorD::ones({5});
  TensorD y = rms_norm(x, g, 1e-6);
  for (double v : y.data()) REQUIRE(v == 0.0);
}

TEST_CASE("rms_norm gradient") {
  std::mt19937_64 rng(9);
  TensorD x = TensorD::randn({3, 8}, rng);
  TensorD g = TensorD::randn({8}, rng);
  TensorD w = TensorD::randn({3, 8}, rng);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(rms_norm(t, g, 1e-6), w)); }, x) <
          1e-6);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(rms_norm(x, t, 1e-6), w)); }, g) <
          1e-6);
}

TEST_CASE("backward of sum gives ones") {
  TensorD w({4}, {0.5, -1, 2, 3});
  w.set_requires_grad(true);
  sum_all(w).backward();
  for (double v : w.grad()) REQUIRE(v == 1.0);
}

TEST_CASE("backward of half sum of squares gives w") {
  TensorD w({4}, {0.5, -1, 2, 3});
  w.set_requires_grad(true);
  scale(sum_all(mul(w, w)), 0.5).backward();
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(w.grad()[i] == Catch::Approx(w.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward accumulates without reset") {
  TensorD w({2}, {1, 2});
  w.set_requires_grad(true);
  sum_all(w).backward();
  sum_all(w).backward();
  REQUIRE(w.grad()[0] == 2.0);
  w.zero_grad();
  sum_all(w).backward();
  REQUIRE(w.grad()[0] == 1.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  TensorD w({2}, {1, 2});
  w.set_requires_grad(true);
  REQUIRE_THROWS_AS(add(w, w).backward(), std::invalid_argument);
}

TEST_CASE("grad_check on linear function is near zero") {
  std::mt19937_64 rng(21);
  TensorD x = TensorD::randn({6}, rng);
  REQUIRE(grad_check([](const TensorD& t) { return sum_all(t); }, x) < 1e-10);
}

TEST_CASE("grad_check on sum of sines") {
  std::mt19937_64 rng(23);
  TensorD x = TensorD::randn({10}, rng);
  REQUIRE(grad_check([](const TensorD& t) { return sum_all(sin_t(t)); }, x) < 1e-7);

  // tape gradient must equal the closed-form cosine
  TensorD xg = x.clone();
  xg.set_requires_grad(true);
  sum_all(sin_t(xg)).backward();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    REQUIRE(xg.grad()[i] == Catch::Approx(std::cos(x.data()[i])).margin(1e-14));
  }
}

TEST_CASE("elementwise and scalar-broadcast ops pass gradient checks") {
  std::mt19937_64 rng(31);
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 r(seed + 100);
    TensorD x = TensorD::randn({3, 5}, r);
    TensorD y = TensorD::randn({3, 5}, r);
    TensorD s = TensorD::randn({1}, r);
    TensorD w = TensorD::randn({3, 5}, r);
    auto weighted = [&](const TensorD& t) { return sum_all(mul(t, w)); };
    REQUIRE(grad_check([&](const TensorD& t) { return weighted(mul(t, y)); }, x) < 1e-6);
    REQUIRE(grad_check([&](const TensorD& t) { return weighted(sub(t, y)); }, x) < 1e-6);
    REQUIRE(grad_check([&](const TensorD& t) { return weighted(exp_t(scale(t, 0.3))); }, x) < 1e-6);
    REQUIRE(grad_check([&](const TensorD& t) { return weighted(pow_int(t, 3)); }, x) < 1e-6);
    REQUIRE(grad_check([&](const TensorD& t) { return weighted(mul_scalar_t(x, t)); }, s) < 1e-6);
    REQUIRE(grad_check([&](const TensorD& t) { return weighted(add_scalar_t(x, t)); }, s) < 1e-6);
    REQUIRE(grad_check([&](const TensorD& t) { return weighted(rms_normalize(t, 1e-6)); }, x) <
            1e-6);
  }
}

TEST_CASE("permute round trip and gradient") {
  std::mt19937_64 rng(37);
  TensorD x = TensorD::randn({2, 3, 4, 5}, rng);
  TensorD p = permute(x, {2, 0, 3, 1});
  REQUIRE(p.shape() == Shape{4, 2, 5, 3});
  TensorD back = permute(p, {1, 3, 0, 2});
  for (std::size_t i = 0; i < x.numel(); ++i) REQUIRE(back.data()[i] == x.data()[i]);
  TensorD w = TensorD::randn({4, 2, 5, 3}, rng);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(permute(t, {2, 0, 3, 1}), w)); },
                     x) < 1e-6);
}

TEST_CASE("reshape take_dim0 element dot gradients") {
  std::mt19937_64 rng(41);
  TensorD x = TensorD::randn({4, 6}, rng);
  TensorD w = TensorD::randn({2, 12}, rng);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(reshape(t, {2, 12}), w)); }, x) <
          1e-6);
  TensorD w2 = TensorD::randn({6}, rng);
  REQUIRE(grad_check([&](const TensorD& t) { return sum_all(mul(take_dim0(t, 2), w2)); }, x) <
          1e-6);
  TensorD v = TensorD::randn({5}, rng);
  REQUIRE(grad_check([&](const TensorD& t) { return element(t, 3); }, v) < 1e-8);
  TensorD u = TensorD::randn({5}, rng);
  REQUIRE(grad_check([&](const TensorD& t) { return dot(t, u); }, v) < 1e-7);
}

TEST_CASE("embedding gather and scatter gradient") {
  std::mt19937_64 rng(43);
  TensorD table = TensorD::randn({7, 3}, rng);
  std::vector<std::int32_t> toks = {1, 5, 1, 0};
  TensorD out = embedding(toks, {4}, table);
  REQUIRE(out.shape() == Shape{4, 3});
  for (std::size_t j = 0; j < 3; ++j) {
    REQUIRE(out.data()[0 * 3 + j] == table.data()[1 * 3 + j]);
    REQUIRE(out.data()[2 * 3 + j] == table.data()[1 * 3 + j]);
  }
  TensorD w = TensorD::randn({4, 3}, rng);
  REQUIRE(grad_check(
              [&](const TensorD& t) { return sum_all(mul(embedding(toks, {4}, t), w)); }, table) <
          1e-6);
  REQUIRE_THROWS_AS(embedding({9}, {1}, table), std::out_of_range);
}

TEST_CASE("cross entropy against log-sum-exp oracle") {
  std::mt19937_64 rng(47);
  TensorD logits = TensorD::randn({4, 9}, rng);
  std::vector<std::int32_t> targets = {3, 0, 8, 2};
  double expected = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    double lse = 0;
    for (std::size_t j = 0; j < 9; ++j) lse += std::exp(logits.data()[r * 9 + j]);
    expected += std::log(lse) - logits.data()[r * 9 + targets[r]];
  }
  expected /= 4;
  REQUIRE(cross_entropy_mean(logits, targets).item() == Catch::Approx(expected).margin(1e-6));
  REQUIRE(grad_check([&](const TensorD& t) { return cross_entropy_mean(t, targets); }, logits) <
          1e-6);
}

TEST_CASE("neg_log_sigmoid value and gradient") {
  TensorD z0 = TensorD::scalar(0.0);
  REQUIRE(neg_log_sigmoid(z0).item() == Catch::Approx(std::log(2.0)).margin(1e-15));
  std::mt19937_64 rng(53);
  TensorD z = TensorD::randn({6}, rng);
  REQUIRE(grad_check([](const TensorD& t) { return sum_all(neg_log_sigmoid(t)); }, z) < 1e-7);
}

TEST_CASE("forward evaluation is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(99);
    TensorF a = TensorF::randn({33, 17}, rng);
    TensorF b = TensorF::randn({17, 29}, rng);
    TensorF y = softmax_lastdim(matmul(a, b));
    return y.data();
  };
  auto r1 = run();
  auto r2 = run();
  REQUIRE(r1 == r2);
}

TEST_CASE("differentiable op battery across seeds") {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(500 + seed);
    TensorD x = TensorD::randn({2, 3, 4}, rng);
    TensorD w = TensorD::randn({4, 4}, rng);
    TensorD coef = TensorD::randn({2, 3, 4}, rng);
    auto f = [&](const TensorD& t) {
      TensorD h = matmul(t, w);
      h = softmax_lastdim(h);
      h = rms_normalize(h, 1e-6);
      return sum_all(mul(h, coef));
    };
    REQUIRE(grad_check(f, x) < 1e-4);
  }
}
