#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "ebrate/model.hpp"
#include "ebrate/numeric.hpp"
#include "ebrate/prior.hpp"
#include "ebrate/sieve_mle.hpp"

using namespace ebrate;

namespace {

Schedule histogram_schedule_with_c(double c) {
  Schedule s;
  s.family = Family::Histogram;
  s.n = 10;
  s.epsilon_n = 0.5;
  s.S = 2;
  s.c = c;
  return s;
}

}  // namespace

TEST_CASE("histogram schedule") {
  const auto s = compute_schedule(Family::Histogram, 1000, 1.0);
  REQUIRE(s.kappa);
  CHECK(*s.kappa == doctest::Approx(1.0 / 3.0));
  const double oracle = std::cbrt(std::log(1000.0) / 1000.0);
  CHECK(s.epsilon_n == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(s.epsilon_n == doctest::Approx(0.19052).epsilon(5e-4));
  CHECK(s.S == 5);
  CHECK(*s.c == doctest::Approx(1000.0 / (oracle * oracle)));
  CHECK_THROWS_AS(compute_schedule(Family::Histogram, 1000, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(compute_schedule(Family::Histogram, 1000), std::invalid_argument);
  CHECK_THROWS_AS(compute_schedule(Family::Histogram, 2, 1.0), std::invalid_argument);
}

TEST_CASE("finite mixture schedule") {
  const int n = 22027;  // just above e^10
  const auto s = compute_schedule(Family::FiniteMixture, n);
  CHECK(s.epsilon_n == doctest::Approx(std::log(n) / std::sqrt(n)));
  CHECK(s.S == 10);
  CHECK(*s.c == doctest::Approx(double(n) * n / (std::log(n) * std::log(n))));
  CHECK(*s.delta == doctest::Approx(std::sqrt(6.0) * s.epsilon_n / 2.0));
  CHECK(*s.B == doctest::Approx(std::sqrt(std::log(1.0 / s.epsilon_n))));
}

TEST_CASE("adaptive mixture schedule and per-S constants") {
  const int n = 500;
  const auto s = compute_schedule(Family::AdaptiveMixture, n, std::nullopt, 2.5);
  CHECK(*s.B == doctest::Approx(std::pow(std::log(n), 2)));
  CHECK(*s.B_l == doctest::Approx(1.0 / n));
  CHECK(*s.B_u == doctest::Approx(std::pow(n, 0.5)));
  const auto k = adaptive_constants(s, 3);
  CHECK(k.c == doctest::Approx(double(n) * n / 3.0));
  CHECK(k.delta == doctest::Approx(std::sqrt(3.0) * std::pow(n, -4.0)));
  CHECK(k.psi == doctest::Approx(3.0 / n));
  CHECK_THROWS_AS(compute_schedule(Family::AdaptiveMixture, n, std::nullopt, 2.0), std::invalid_argument);
}

TEST_CASE("schedule monotonicity") {
  for (auto fam : {Family::Histogram, Family::FiniteMixture, Family::FixedDesignRegression}) {
    std::optional<double> beta;
    if (fam != Family::FiniteMixture) beta = 1.0;
    Schedule prev = compute_schedule(fam, 20, beta);
    for (int n = 40; n <= 20000; n *= 2) {
      const auto s = compute_schedule(fam, n, beta);
      CHECK(s.epsilon_n < prev.epsilon_n);
      if (s.c) CHECK(*s.c > *prev.c);
      if (s.delta) CHECK(*s.delta < *prev.delta);
      prev = s;
    }
  }
}

TEST_CASE("schedule JSON round trip") {
  for (auto fam : {Family::GaussianLocation, Family::FiniteMixture, Family::SparseSequence,
                   Family::FixedDesignRegression, Family::AdaptiveMixture}) {
    const auto s = compute_schedule(fam, 300, fam == Family::FixedDesignRegression ? std::optional(2.0) : std::nullopt);
    const auto j = s.to_json();
    for (const char* key : {"family", "n", "beta", "epsilon_n", "S", "c", "delta", "B", "psi", "B_l", "B_u", "gamma"})
      CHECK(j.contains(key));
    CHECK(Schedule::from_json(j) == s);
  }
}

TEST_CASE("toy prior standard deviation") {
  CHECK(toy_prior_sd(std::log(2.0), 100) == doctest::Approx(std::sqrt(0.02) / 0.6744897501960817).epsilon(1e-13));
  CHECK(toy_prior_sd(std::log(2.0), 100) == doctest::Approx(0.209670).epsilon(1e-5));
  CHECK(toy_prior_sd(50.0, 100) > 1e15);
  CHECK(std::isfinite(toy_prior_sd(50.0, 100)));
  for (int n : {3, 17, 250}) CHECK(toy_prior_sd(1.3, 4 * n) == doctest::Approx(toy_prior_sd(1.3, n) / 2.0).epsilon(1e-14));
}

TEST_CASE("toy prior mass of the likelihood neighborhood is exp(-C)") {
  for (int n : {10, 100, 10000}) {
    for (double C : {0.1, std::log(2.0), 2.0}) {
      const double s = toy_prior_sd(C, n);
      CHECK(2.0 * normal_cdf(std::sqrt(2.0 / n) / s) - 1.0 == doctest::Approx(std::exp(-C)).epsilon(1e-12));
      // schedule psi gives the same prior sd
      ScheduleOptions o;
      o.C = C;
      const auto sch = compute_schedule(Family::GaussianLocation, std::max(n, 3), o);
      CHECK(1.0 / std::sqrt(std::max(n, 3) * *sch.psi) == doctest::Approx(toy_prior_sd(C, std::max(n, 3))));
    }
  }
}

TEST_CASE("build_prior constructions") {
  SUBCASE("Dirichlet concentration") {
    const auto p = std::get<DirichletPrior>(
        build_prior(Family::Histogram, ParamPoint::histogram({0.3, 0.7}), histogram_schedule_with_c(10.0)));
    CHECK(p.alpha[0] == doctest::Approx(4.0));
    CHECK(p.alpha[1] == doctest::Approx(8.0));
  }
  SUBCASE("sparse conditional Gaussian") {
    const int n = 6;
    const std::vector<double> x{0.3, -1.0, 2.5, 0.1, 0.7, -3.2};
    const auto mle = ParamPoint::sparse(n, {2, 5}, {x[2], x[5]});
    const auto s = compute_schedule(Family::SparseSequence, n);
    const auto p = std::get<GaussianPrior>(build_prior(Family::SparseSequence, mle, s, 0.2));
    CHECK(p.mean(0) == 2.5);
    CHECK(p.mean(1) == -3.2);
    CHECK((p.cov.covariance(2) - 5.0 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-14);
    CHECK_THROWS_AS(build_prior(Family::SparseSequence, mle, s, 1.0), std::invalid_argument);
  }
  SUBCASE("mixture location boxes") {
    Schedule s;
    s.family = Family::FiniteMixture;
    s.n = 10;
    s.epsilon_n = 0.5;
    s.c = 5.0;
    s.delta = 0.1;
    const auto p = std::get<MixtureParamPrior>(
        build_prior(Family::FiniteMixture, ParamPoint::mixture({0.5, 0.5}, {-1.0, 1.0}), s));
    CHECK(p.location_boxes[0].first == doctest::Approx(-1.1));
    CHECK(p.location_boxes[0].second == doctest::Approx(-0.9));
    CHECK(p.location_boxes[1].first == doctest::Approx(0.9));
    CHECK(p.location_boxes[1].second == doctest::Approx(1.1));
  }
  SUBCASE("regression conditional covariance uses the Gram matrix") {
    const auto s = compute_schedule(Family::FixedDesignRegression, 40, 2.0);
    const auto p = std::get<GaussianPrior>(
        build_prior(Family::FixedDesignRegression, ParamPoint::regression({1.0, 0.2, 0.1}), s, 0.5));
    const auto phi = fourier_design(equispaced_design(40), 3);
    const Eigen::MatrixXd expect = (phi.transpose() * phi).inverse() / 0.5;
    CHECK((p.cov.covariance(3) - expect).norm() < 1e-12);
  }
}

TEST_CASE("model weights") {
  WeightConstants k;
  CHECK(model_weight(WeightScheme::SparseSubset, Subset{{0, 4}}, 10, k) ==
        doctest::Approx(std::exp(-2.0) / 45.0).epsilon(1e-13));
  k.B = 0.7;
  for (int s = 1; s < 8; ++s)
    CHECK(model_weight(WeightScheme::TruncationOrder, TruncationOrder{s + 1}, 20, k) /
              model_weight(WeightScheme::TruncationOrder, TruncationOrder{s}, 20, k) ==
          doctest::Approx(std::exp(-0.7)));
  CHECK(model_weight(WeightScheme::AdaptiveMixture, Dimension{1}, 10, WeightConstants{}) == 1.0);
  CHECK(log_model_weight(WeightScheme::AdaptiveMixture, Dimension{3}, 10, WeightConstants{}) ==
        doctest::Approx(-std::pow(std::log(3.0), 1.5) * 3.0));
  CHECK_THROWS_AS(model_weight(WeightScheme::TruncationOrder, TruncationOrder{11}, 10, k), std::invalid_argument);
}

TEST_CASE("hierarchical sparse weights normalize over all subsets") {
  const int n = 10;
  const auto model = ModelSpec::sparse_sequence(n);
  const auto data = simulate(model, ParamPoint::sparse(n, {}, {}), 1);
  const auto h = build_hierarchical_prior(model, data, compute_schedule(Family::SparseSequence, n), WeightConstants{});
  double total = 0.0, direct = 0.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    Subset s;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) s.indices.push_back(i);
    total += std::exp(h.log_index_prob(s));
    direct += model_weight(WeightScheme::SparseSubset, s, n, WeightConstants{});
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  Subset two{{1, 7}};
  CHECK(std::exp(h.log_index_prob(two)) ==
        doctest::Approx(model_weight(WeightScheme::SparseSubset, two, n, WeightConstants{}) / direct).epsilon(1e-12));
}

TEST_CASE("truncation weights normalize for small n") {
  for (int n = 4; n <= 20; ++n) {
    const auto model = ModelSpec::regression(n);
    const auto data = simulate(model, ParamPoint::regression({0.0}), n);
    ScheduleOptions o;
    o.S_max = n - 1;
    const auto h = build_hierarchical_prior(model, data, compute_schedule(Family::FixedDesignRegression, n, o),
                                            WeightConstants{});
    double total = 0.0;
    for (int s = 1; s <= n - 1; ++s) total += std::exp(h.log_index_prob(TruncationOrder{s}));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("prior sampling") {
  SUBCASE("Dirichlet(1,1) is symmetric") {
    EmpiricalPrior p = DirichletPrior{{1.0, 1.0}};
    Rng rng(4);
    const int m = 100000;
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += sample_prior(p, rng).weights[0];
    const double se = std::sqrt(1.0 / 12.0 / m);
    CHECK(std::abs(acc / m - 0.5) < 3.0 * se);
  }
  SUBCASE("Gaussian sample mean approaches the prior mean") {
    GaussianPrior g;
    g.mean = Eigen::VectorXd::Constant(1, 2.0);
    g.cov = CovarianceDescriptor::isotropic(4.0);
    EmpiricalPrior p = g;
    Rng rng(5);
    for (int m : {1000, 100000}) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += sample_prior(p, rng).theta[0];
      CHECK(std::abs(acc / m - 2.0) < 4.0 * 2.0 / std::sqrt(double(m)));
    }
  }
  SUBCASE("uniform boxes contain every draw") {
    MixtureParamPrior mp;
    mp.weights.alpha = {2.0, 3.0};
    mp.location_boxes = {{-1.1, -0.9}, {0.5, 0.75}};
    EmpiricalPrior p = mp;
    Rng rng(6);
    for (int i = 0; i < 5000; ++i) {
      const auto d = sample_prior(p, rng);
      CHECK(d.locations[0] >= -1.1);
      CHECK(d.locations[0] <= -0.9);
      CHECK(d.locations[1] >= 0.5);
      CHECK(d.locations[1] <= 0.75);
    }
  }
}

TEST_CASE("prior densities") {
  SUBCASE("product of uniform boxes") {
    MixtureParamPrior mp;
    mp.weights.alpha = {1.0, 1.0};
    mp.location_boxes = {{-1.1, -0.9}, {0.9, 1.1}};
    const auto theta = ParamPoint::mixture({0.4, 0.6}, {-1.0, 1.05});
    CHECK(log_prior_density(mp, theta) == doctest::Approx(-2.0 * std::log(0.2)));
    CHECK(log_prior_density(mp, ParamPoint::mixture({0.4, 0.6}, {-1.2, 1.0})) == kNegInf);
  }
  SUBCASE("Dirichlet(1,1) is flat") {
    CHECK(log_prior_density(DirichletPrior{{1.0, 1.0}}, ParamPoint::histogram({0.2, 0.8})) ==
          doctest::Approx(0.0).scale(1.0));
  }
  SUBCASE("1-D Gaussian density integrates to one") {
    GaussianPrior g;
    g.mean = Eigen::VectorXd::Constant(1, 0.3);
    g.cov = CovarianceDescriptor::isotropic(0.49);
    std::vector<double> v;
    const double lo = 0.3 - 7.0, step = 14.0 / 20000;
    for (int i = 0; i <= 20000; ++i) v.push_back(std::exp(log_prior_density(g, ParamPoint::location(lo + i * step))));
    CHECK(trapezoid(v, step) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("hierarchical density adds the index weight") {
    const int n = 8;
    const auto model = ModelSpec::sparse_sequence(n);
    const auto data = simulate(model, ParamPoint::sparse(n, {2}, {3.0}), 2);
    const auto h = build_hierarchical_prior(model, data, compute_schedule(Family::SparseSequence, n), WeightConstants{});
    const auto theta = ParamPoint::sparse(n, {2}, {2.0});
    const auto base = h.conditional(Subset{{2}});
    CHECK(log_prior_density(h, theta) ==
          doctest::Approx(h.log_index_prob(Subset{{2}}) + log_base_density(base, theta)));
  }
}

TEST_CASE("priors are centred on the sieve MLE") {
  Rng rng(9);
  std::normal_distribution<double> g(0.0, 0.3);
  SUBCASE("Gaussian") {
    const auto model = ModelSpec::gaussian_location(50);
    const auto data = simulate(model, ParamPoint::location(0.0), 3);
    const auto mle = sieve_mle(model, Dimension{1}, data).point;
    const auto p = build_prior(Family::GaussianLocation, mle, compute_schedule(Family::GaussianLocation, 50));
    const double top = log_prior_density(p, mle);
    for (int k = 0; k < 200; ++k)
      CHECK(log_prior_density(p, ParamPoint::location(mle.theta[0] + g(rng))) <= top);
  }
  SUBCASE("Dirichlet with positive counts") {
    const auto model = ModelSpec::histogram(400);
    const auto data = simulate(model, ParamPoint::histogram({0.2, 0.3, 0.5}), 8);
    const auto mle = sieve_mle(model, Dimension{3}, data).point;
    const auto p = build_prior(Family::Histogram, mle, compute_schedule(Family::Histogram, 400, 1.0));
    const double top = log_prior_density(p, mle);
    for (int k = 0; k < 200; ++k) {
      std::vector<double> w = mle.weights;
      double t = 0.0;
      for (auto& v : w) t += (v = std::max(1e-6, v + 0.1 * g(rng)));
      for (auto& v : w) v /= t;
      CHECK(log_prior_density(p, ParamPoint::histogram(w)) <= top + 1e-9);
    }
  }
  SUBCASE("regression") {
    const auto model = ModelSpec::regression(40);
    const auto data = simulate(model, ParamPoint::regression({1.0, 0.5}), 8);
    const auto mle = sieve_mle(model, TruncationOrder{3}, data).point;
    const auto p = build_prior(Family::FixedDesignRegression, mle, compute_schedule(Family::FixedDesignRegression, 40, 2.0));
    const double top = log_prior_density(p, mle);
    for (int k = 0; k < 200; ++k) {
      auto t = mle.theta;
      for (auto& v : t) v += g(rng);
      CHECK(log_prior_density(p, ParamPoint::regression(t)) <= top);
    }
  }
}

TEST_CASE("covariance descriptor") {
  Eigen::MatrixXd notpd(2, 2);
  notpd << 1, 2, 2, 1;
  CHECK_THROWS_AS(CovarianceDescriptor::structured(1.0, notpd), std::invalid_argument);
}
