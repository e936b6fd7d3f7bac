#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "motif/polynorm.hpp"

using namespace motif;

TEST_CASE("polynorm with single linear coefficient is the RMS normalizer") {
  auto p = PolyNormParams<double>::init(1e-6);
  p.coeffs = TensorD({3}, {1.0, 0.0, 0.0});
  std::mt19937_64 rng(1);
  TensorD x = TensorD::randn({4, 8}, rng);
  TensorD y = polynorm(x, p);
  TensorD expected = rms_normalize(x, 1e-6);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    REQUIRE(y.data()[i] == Catch::Approx(expected.data()[i]).margin(1e-12));
  }
}

TEST_CASE("polynorm of constant positive vector with uniform coefficients is ones") {
  auto p = PolyNormParams<double>::init(1e-9);
  TensorD x = TensorD::full({2, 16}, 2.5);
  TensorD y = polynorm(x, p);
  for (double v : y.data()) REQUIRE(v == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("polynorm odd-power symmetry is exact") {
  auto p = PolyNormParams<double>::init(1e-6);
  p.coeffs = TensorD({3}, {0.7, 0.0, 0.4});  // a2 = 0
  std::mt19937_64 rng(2);
  TensorD x = TensorD::randn({3, 10}, rng);
  TensorD neg = scale(x, -1.0);
  TensorD y = polynorm(x, p);
  TensorD yn = polynorm(neg, p);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    REQUIRE(yn.data()[i] == -y.data()[i]);
  }
}

TEST_CASE("polynorm terms are scale invariant") {
  std::mt19937_64 rng(3);
  TensorD x = TensorD::uniform({2, 12}, rng, 0.5, 2.0);
  for (double c : {0.25, 3.0, 117.0}) {
    for (int i = 1; i <= 3; ++i) {
      TensorD t1 = rms_normalize(pow_int(scale(x, c), i), 1e-9);
      TensorD t2 = rms_normalize(pow_int(x, i), 1e-9);
      for (std::size_t j = 0; j < x.numel(); ++j) {
        REQUIRE(t1.data()[j] == Catch::Approx(t2.data()[j]).margin(1e-6));
      }
    }
  }
}

TEST_CASE("polynorm finite for finite inputs including zero") {
  auto p = PolyNormParams<double>::init(1e-6);
  TensorD zero = TensorD::zeros({2, 6});
  for (double v : polynorm(zero, p).data()) REQUIRE(std::isfinite(v));
  std::mt19937_64 rng(4);
  TensorD wild = TensorD::uniform({2, 6}, rng, -100.0, 100.0);
  for (double v : polynorm(wild, p).data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("polynorm gradient over input coefficients and bias") {
  std::mt19937_64 rng(5);
  TensorD x = TensorD::randn({4, 16}, rng);
  TensorD w = TensorD::randn({4, 16}, rng);
  auto p = PolyNormParams<double>::init(1e-6);
  auto weighted = [&](const TensorD& y) { return sum_all(mul(y, w)); };

  REQUIRE(grad_check([&](const TensorD& t) { return weighted(polynorm(t, p)); }, x) < 1e-4);
  TensorD c0 = p.coeffs;
  REQUIRE(grad_check(
              [&](const TensorD& t) {
                p.coeffs = t;
                TensorD r = weighted(polynorm(x, p));
                p.coeffs = c0;
                return r;
              },
              c0) < 1e-4);
  TensorD b0 = p.bias;
  REQUIRE(grad_check(
              [&](const TensorD& t) {
                p.bias = t;
                TensorD r = weighted(polynorm(x, p));
                p.bias = b0;
                return r;
              },
              b0) < 1e-4);
}
