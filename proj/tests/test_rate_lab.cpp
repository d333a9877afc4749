#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "ebrate/numeric.hpp"
#include "ebrate/random.hpp"
#include "ebrate/rate_lab.hpp"

using namespace ebrate;
namespace fs = std::filesystem;

namespace {

RateStudyConfig gaussian_study() {
  RateStudyConfig cfg;
  cfg.family = Family::GaussianLocation;
  cfg.n_grid = {50, 100, 200, 400};
  cfg.replicates = 20;
  cfg.draws = 200;
  cfg.M = 1.0;
  cfg.seed = 5;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("power-law fits") {
  const std::vector<double> n{100, 200, 400, 800, 1600};
  SUBCASE("exact power law") {
    std::vector<double> y;
    for (double v : n) y.push_back(1.0 / v);
    const auto f = fit_power_law(n, y);
    CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
    for (double r : f.residuals) CHECK(std::abs(r) < 1e-12);
  }
  SUBCASE("noisy power law") {
    Rng rng(8);
    std::normal_distribution<double> g(0.0, 0.01);
    std::vector<double> y;
    for (double v : n) y.push_back(3.0 * std::pow(v, -0.8) * std::exp(g(rng)));
    CHECK(std::abs(fit_power_law(n, y).slope + 0.8) < 0.05);
  }
  SUBCASE("constant response") {
    const auto f = fit_power_law(n, std::vector<double>(5, 0.3));
    CHECK(f.slope == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(0.3)));
  }
  SUBCASE("non-positive responses are dropped") {
    const auto f = fit_power_law(n, {0.0, 0.5, 0.25, 0.125, -1.0});
    CHECK(f.dropped == 2);
    CHECK(f.slope == doctest::Approx(-1.0));
    CHECK_THROWS(fit_power_law(n, {0.0, 0.5, 0.0, 0.125, -1.0}));
  }
}

TEST_CASE("config validation") {
  auto cfg = gaussian_study();
  CHECK_NOTHROW(cfg.validate());
  cfg.n_grid = {100, 100, 200};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = gaussian_study();
  cfg.replicates = 19;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = gaussian_study();
  cfg.M = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("alpha policy") {
  RateStudyConfig cfg;
  CHECK(resolve_alpha(cfg) == 1.0);
  cfg.family = Family::SparseSequence;
  CHECK(resolve_alpha(cfg) == 0.25);
  cfg.p = 3.0;
  CHECK(resolve_alpha(cfg) == doctest::Approx(1.0 / 3.0));
  cfg.alpha = 0.4;
  CHECK(resolve_alpha(cfg) == 0.4);
}

TEST_CASE("truth points") {
  RateStudyConfig cfg;
  cfg.family = Family::SparseSequence;
  cfg.truth.s_star = 4;
  const auto t = truth_point(cfg, 100);
  int nz = 0;
  double sum = 0.0;
  for (double v : t.theta)
    if (v != 0.0) ++nz, sum += v;
  CHECK(nz == 4);
  CHECK(sum == 0.0);
  cfg.family = Family::FixedDesignRegression;
  cfg.beta = 2.0;
  cfg.truth.terms = 10;
  const auto r = truth_point(cfg, 100);
  REQUIRE(r.theta.size() == 10);
  CHECK(r.theta[2] == doctest::Approx(std::pow(3.0, -2.5)));
}

TEST_CASE("saturated threshold gives zero tail mass") {
  auto cfg = gaussian_study();
  cfg.M = 100.0;
  const auto curve = run_rate_study(cfg);
  REQUIRE(curve.points.size() == 4);
  for (const auto& p : curve.points) {
    CHECK(p.tail_mass == 0.0);
    CHECK(p.replicates_ok == 20);
  }
  CHECK(std::isfinite(curve.fit.slope));
}

TEST_CASE("gaussian study basics") {
  const auto cfg = gaussian_study();
  const auto curve = run_rate_study(cfg);
  CHECK(curve.rows.size() == 80);
  for (const auto& p : curve.points) {
    CHECK(p.tail_mass >= 0.0);
    CHECK(p.tail_mass <= 1.0);
    CHECK(p.eps_n == doctest::Approx(1.0 / std::sqrt(p.n)));
  }
  CHECK(curve.fit.slope < -0.5);
  CHECK(curve.fit.slope > -1.5);
  // replicate seeds are derived from (master, n, r)
  CHECK(curve.rows[0].seed == derive_seed(5, 50, 0));
}

TEST_CASE("determinism and thread independence") {
  TempDir dir("ebrate_rate_det");
  auto cfg = gaussian_study();
  const auto a = run_rate_study(cfg);
  cfg.threads = 3;
  const auto b = run_rate_study(cfg);
  CHECK(a == b);
  cfg.threads = 1;
  persist(a, cfg, dir.path / "a.csv");
  persist(run_rate_study(cfg), cfg, dir.path / "b.csv");
  CHECK(slurp(dir.path / "a.csv") == slurp(dir.path / "b.csv"));
  CHECK(slurp(dir.path / "a.csv.json") == slurp(dir.path / "b.csv.json"));
}

TEST_CASE("persist and load round trip") {
  TempDir dir("ebrate_rate_io");
  auto cfg = gaussian_study();
  cfg.output = (dir.path / "study.csv").string();
  const auto curve = run_rate_study(cfg);
  persist(curve, cfg, cfg.output);
  CHECK(fs::exists(manifest_path(cfg.output)));
  const auto [back, back_cfg] = load(cfg.output);
  CHECK(back == curve);
  CHECK(back_cfg == cfg);
  const auto text = slurp(cfg.output);
  CHECK(text.find("# schema_version=1") != std::string::npos);
  CHECK_THROWS_AS(load(dir.path / "missing.csv"), StudyNotFoundError);

  std::ofstream(dir.path / "bad.csv") << "garbage\n";
  std::ofstream(dir.path / "bad.csv.json") << "{\"schema_version\": 99}";
  CHECK_THROWS(load(dir.path / "bad.csv"));
}

TEST_CASE("concurrent studies to distinct paths") {
  TempDir dir("ebrate_rate_conc");
  auto c1 = gaussian_study();
  auto c2 = gaussian_study();
  c2.seed = 77;
  c2.n_grid = {60, 120, 240};
  RateCurve r1, r2;
  std::thread t1([&] {
    r1 = run_rate_study(c1);
    persist(r1, c1, dir.path / "one.csv");
  });
  std::thread t2([&] {
    r2 = run_rate_study(c2);
    persist(r2, c2, dir.path / "two.csv");
  });
  t1.join();
  t2.join();
  CHECK(load(dir.path / "one.csv").first == r1);
  CHECK(load(dir.path / "two.csv").first == r2);
  CHECK(load(dir.path / "two.csv").first.rows.size() == 60);
}

TEST_CASE("independent seeds give compatible slopes") {
  auto cfg = gaussian_study();
  const auto a = run_rate_study(cfg);
  cfg.seed = 1234;
  const auto b = run_rate_study(cfg);
  CHECK(std::abs(a.fit.slope - b.fit.slope) < 6.0 * std::hypot(a.fit.slope_se, b.fit.slope_se));
}

TEST_CASE("sparse null truth: tail mass does not grow with n") {
  RateStudyConfig cfg;
  cfg.family = Family::SparseSequence;
  cfg.truth.s_star = 0;
  cfg.n_grid = {25, 50, 100, 150, 200};
  cfg.replicates = 20;
  cfg.draws = 200;
  cfg.M = 1.0;
  cfg.response = Response::TailMass;
  cfg.seed = 3;
  const auto curve = run_rate_study(cfg);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    CHECK(b.tail_mass <= a.tail_mass + 3.0 * std::hypot(a.tail_mass_se, b.tail_mass_se) + 1e-12);
  }
  CHECK(curve.points.back().tail_mass <= curve.points.front().tail_mass + 1e-12);
}

TEST_CASE("regression smoke study") {
  RateStudyConfig cfg;
  cfg.family = Family::FixedDesignRegression;
  cfg.beta = 2.0;
  cfg.n_grid = {50, 100, 200};
  cfg.replicates = 20;
  cfg.draws = 100;
  cfg.M = 2.0;
  cfg.seed = 4;
  const auto curve = run_rate_study(cfg);
  CHECK(curve.points.size() == 3);
  CHECK(curve.alpha == 0.25);
  CHECK(std::isfinite(curve.fit.slope));
  for (const auto& p : curve.points) CHECK(p.mean_sq_distance > 0.0);
}

TEST_CASE("calibration picks the smallest adequate M") {
  auto cfg = gaussian_study();
  cfg.M.reset();
  cfg.pilot_replicates = 20;
  const double M = calibrate_M(cfg);
  CHECK(std::find(cfg.M_candidates.begin(), cfg.M_candidates.end(), M) != cfg.M_candidates.end());
  const auto curve = run_rate_study(cfg);
  CHECK(curve.M == M);
  CHECK(curve.points.back().tail_mass < 0.5);
}

TEST_CASE("response names") {
  for (auto r : {Response::TailMass, Response::MeanSqDistance, Response::MeanDistance})
    CHECK(response_from_string(to_string(r)) == r);
  for (auto c : {Calibration::TailMass, Calibration::BallMass}) CHECK(calibration_from_string(to_string(c)) == c);
  CHECK_THROWS(response_from_string("mean"));
}
