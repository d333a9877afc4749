#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ebrate/config.hpp"

using namespace ebrate;
using nlohmann::json;

namespace {

std::string error_of(const json& j) {
  try {
    parse_config_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("minimal study config takes defaults") {
  const auto any = parse_config_json(json{{"family", "GaussianLocation"}, {"n_grid", {100, 200, 400}}});
  const auto& c = std::get<RateStudyConfig>(any);
  CHECK(c.replicates == 20);
  CHECK(c.draws == 1000);
  CHECK_FALSE(c.M.has_value());
  CHECK(c.M_candidates == std::vector<double>{1, 2, 4, 8});
  CHECK(c.calibration_target == 0.5);
  CHECK(c.response == Response::MeanSqDistance);
  CHECK(c.threads == 1);
  CHECK(c.seed == 0);
}

TEST_CASE("family-specific defaults") {
  const auto mix = std::get<RateStudyConfig>(parse_config_json(json{{"family", "FiniteMixture"}, {"n_grid", {100, 200, 400}}}));
  REQUIRE(mix.kernel.has_value());
  CHECK(*mix.kernel == Kernel::Normal);
  const auto ball = std::get<RateStudyConfig>(parse_config_json(
      json{{"family", "SparseSequence"}, {"n_grid", {500}}, {"s_star", 5}, {"calibration", "ball_mass"}}));
  CHECK(ball.calibration_target == 0.9);
  CHECK(ball.M_candidates == std::vector<double>{1, 2, 4, 8, 16});
  CHECK(ball.truth.s_star == 5);
  const auto probe = std::get<ProbeConfig>(parse_config_json(json{{"kind", "probe"}, {"family", "Histogram"}, {"beta", 1.0}}));
  CHECK(probe.n == 100);
  CHECK(probe.conditions == std::vector<std::string>{"LP1"});
  CHECK(probe.d == 2.0);
}

TEST_CASE("out-of-range values are rejected with the key named") {
  const auto msg = error_of(json{{"family", "Histogram"}, {"beta", 1.5}, {"n_grid", {200, 400, 800}}});
  CHECK(msg.find("beta") != std::string::npos);
  CHECK(msg.find("(0, 1]") != std::string::npos);
  CHECK_FALSE(error_of(json{{"family", "Histogram"}, {"beta", 1.0}, {"n_grid", {200, 400, 800}}}).size() > 0);
  CHECK(error_of(json{{"family", "GaussianLocation"}, {"n_grid", {100, 50, 200}}}).find("n_grid") != std::string::npos);
  CHECK(error_of(json{{"family", "GaussianLocation"}, {"n_grid", {100, 200}}, {"replicates", 3}}).find("replicates") !=
        std::string::npos);
  CHECK(error_of(json{{"family", "SparseSequence"}, {"n_grid", {100, 200}}, {"gamma", 1.0}}).find("gamma") !=
        std::string::npos);
  CHECK(error_of(json{{"kind", "probe"}, {"family", "GaussianLocation"}, {"conditions", {"LP9"}}}).find("LP9") !=
        std::string::npos);
}

TEST_CASE("unknown keys get suggestions") {
  const auto msg = error_of(json{{"family", "SparseSequence"}, {"n_grid", {100, 200}}, {"gamm", 0.1}});
  CHECK(msg.find("'gamm'") != std::string::npos);
  CHECK(msg.find("did you mean 'gamma'") != std::string::npos);
  CHECK(error_of(json{{"family", "GaussianLocation"}, {"n_grid", {100}}, {"zzzzzzzz", 1}}).find("did you mean") ==
        std::string::npos);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(suggest_key("replicats", {"replicates", "draws"}) == std::optional<std::string>("replicates"));
}

TEST_CASE("type errors name the key") {
  const auto msg = error_of(json{{"family", "GaussianLocation"}, {"n_grid", {100, 200}}, {"draws", "many"}});
  CHECK(msg.find("draws") != std::string::npos);
  CHECK(error_of(json{{"family", "Gaussian"}, {"n_grid", {100}}}).find("family") != std::string::npos);
  CHECK(error_of(json{{"n_grid", {100}}}).find("family") != std::string::npos);
}

TEST_CASE("emit then parse is the identity") {
  RateStudyConfig s;
  s.family = Family::FixedDesignRegression;
  s.beta = 2.0;
  s.n_grid = {100, 200, 400, 800};
  s.replicates = 100;
  s.M = 2.5;
  s.p = 3.0;
  s.gamma = 0.2;
  s.S_max = 30;
  s.truth.terms = 50;
  s.seed = 18446744073709551557ULL;
  s.output = "out/reg.csv";
  s.threads = 4;
  s.C = 0.1 + 0.2;
  CHECK(std::get<RateStudyConfig>(parse_config_json(emit(AnyConfig{s}))) == s);

  RateStudyConfig m;
  m.family = Family::AdaptiveMixture;
  m.n_grid = {100, 200, 400};
  m.truth.weights = {0.2, 0.3, 0.5};
  m.truth.locations = {-1.0, 0.0, 2.0};
  m.truth.precision = 2.5;
  m.calibration = Calibration::BallMass;
  m.M_candidates = {3.0, 6.0};
  m.response = Response::TailMass;
  CHECK(std::get<RateStudyConfig>(parse_config_json(emit(AnyConfig{m}))) == m);

  ProbeConfig p;
  p.family = Family::FiniteMixture;
  p.kernel = Kernel::Cauchy;
  p.n = 321;
  p.conditions = {"LP1", "GP1"};
  p.alpha = 0.3;
  p.seed = 9;
  CHECK(std::get<ProbeConfig>(parse_config_json(emit(AnyConfig{p}))) == p);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "ebrate_cfg.json";
  std::ofstream(path) << R"({"family": "GaussianLocation", "n_grid": [10, 20, 40], "seed": 3})";
  CHECK(std::get<RateStudyConfig>(parse_config(path)).seed == 3);
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(parse_config(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_config(path), ConfigError);
}
