#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "ebrate/numeric.hpp"
#include "ebrate/random.hpp"

using namespace ebrate;

TEST_CASE("log_sum_exp is stable and handles -inf") {
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  const std::vector<double> empty_mass{kNegInf, kNegInf};
  CHECK(log_sum_exp(empty_mass) == kNegInf);
  const std::vector<double> mixed{kNegInf, 0.0};
  CHECK(log_sum_exp(mixed) == doctest::Approx(0.0));
}

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
}

TEST_CASE("log_choose matches small factorial arithmetic") {
  CHECK(std::exp(log_choose(10, 3)) == doctest::Approx(120.0).epsilon(1e-12));
  CHECK(log_choose(7, 0) == doctest::Approx(0.0));
  CHECK(log_choose(7, 7) == doctest::Approx(0.0));
}

TEST_CASE("regularized gamma and beta") {
  // P(1, x) = 1 - e^{-x}
  CHECK(gamma_p(1.0, 0.7) == doctest::Approx(1.0 - std::exp(-0.7)).epsilon(1e-14));
  // I_x(1, 1) = x
  CHECK(beta_cdf(0.37, 1.0, 1.0) == doctest::Approx(0.37).epsilon(1e-14));
  // I_x(2, 1) = x^2
  CHECK(beta_cdf(0.5, 2.0, 1.0) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("trapezoid is exact on linear integrands") {
  std::vector<double> v;
  for (int i = 0; i <= 10; ++i) v.push_back(3.0 * i * 0.1 + 1.0);
  CHECK(trapezoid(v, 0.1) == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("mean_and_se and batch means on iid noise") {
  Rng rng(7);
  std::normal_distribution<double> g(2.0, 3.0);
  std::vector<double> x(20000);
  for (auto& v : x) v = g(rng);
  const auto ms = mean_and_se(x);
  CHECK(ms.mean == doctest::Approx(2.0).epsilon(0.05));
  CHECK(ms.se == doctest::Approx(3.0 / std::sqrt(20000.0)).epsilon(0.05));
  CHECK(batch_means_se(x) == doctest::Approx(ms.se).epsilon(0.35));
}

TEST_CASE("format_double round-trips bit-exactly") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(u(rng), static_cast<int>(rng() % 200) - 100);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(parse_double(format_double(0.1)) == 0.1);
  CHECK(std::isinf(parse_double(format_double(-std::numeric_limits<double>::infinity()))));
  CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2, 0) != derive_seed(2, 2, 0));
}
