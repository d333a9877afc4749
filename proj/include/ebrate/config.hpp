#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ebrate/model.hpp"
#include "ebrate/prior.hpp"
#include "ebrate/rate_lab.hpp"

namespace ebrate {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Single-n configuration for simulate / fit-mle / posterior / probe-conditions.
struct ProbeConfig {
  Family family = Family::GaussianLocation;
  std::optional<Kernel> kernel;
  double sigma = 1.0;
  int n = 100;
  std::optional<double> beta;
  std::optional<double> b;
  std::optional<double> gamma;
  std::optional<double> B;
  std::optional<int> S_max;
  double C = 0.6931471805599453;
  double d = 2.0;
  int draws = 10000;
  int replicates = 1000;  // data replicates of the GP1 integral
  double p = 2.0;
  std::optional<double> alpha;
  std::vector<std::string> conditions{"LP1"};
  TruthCfg truth;
  std::uint64_t seed = 0;
  std::string output;

  void validate() const;
  ModelSpec model() const;
  ScheduleOptions schedule_options() const;
  bool operator==(const ProbeConfig&) const = default;
};

using AnyConfig = std::variant<RateStudyConfig, ProbeConfig>;

/// Strict parsing: unknown keys, wrong types and out-of-range values are ConfigErrors
/// naming the key. "kind" selects "rate_study" (default) or "probe".
AnyConfig parse_config(const std::filesystem::path& path);
AnyConfig parse_config_json(const nlohmann::json& j);
RateStudyConfig rate_study_from_json(const nlohmann::json& j);
ProbeConfig probe_config_from_json(const nlohmann::json& j);

nlohmann::json rate_study_to_json(const RateStudyConfig& cfg);
nlohmann::json probe_config_to_json(const ProbeConfig& cfg);
nlohmann::json emit(const AnyConfig& cfg);

std::size_t edit_distance(std::string_view a, std::string_view b);
/// Closest key within edit distance 2, if any.
std::optional<std::string> suggest_key(std::string_view key, const std::vector<std::string>& known);

}  // namespace ebrate
