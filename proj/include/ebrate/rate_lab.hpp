#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ebrate/model.hpp"

namespace ebrate {

enum class Response { TailMass, MeanSqDistance, MeanDistance };
std::string_view to_string(Response r);
Response response_from_string(std::string_view name);

enum class Calibration { TailMass, BallMass };
std::string_view to_string(Calibration c);
Calibration calibration_from_string(std::string_view name);

/// Data-generating truth. Fields irrelevant to the family are ignored.
struct TruthCfg {
  double location = 0.0;                        // GaussianLocation
  double slope = 0.5;                           // Histogram: p(x) = 1 + slope (2x - 1)
  int s_star = 0;                               // SparseSequence: number of nonzeros
  double signal = 5.0;                          //   magnitude, alternating signs
  int terms = 1000;                             // regression: theta_j = j^{-(beta + 1/2)}
  std::vector<double> weights{0.5, 0.5};        // mixtures
  std::vector<double> locations{-0.5, 0.5};
  double precision = 1.0;                       // AdaptiveMixture

  bool operator==(const TruthCfg&) const = default;
};

struct RateStudyConfig {
  Family family = Family::GaussianLocation;
  std::optional<Kernel> kernel;
  double sigma = 1.0;
  std::optional<double> beta;
  std::optional<double> b;
  TruthCfg truth;
  std::vector<int> n_grid;
  int replicates = 20;
  int draws = 1000;
  std::optional<double> M;  // calibrated when absent
  Calibration calibration = Calibration::TailMass;
  std::vector<double> M_candidates{1.0, 2.0, 4.0, 8.0};
  double calibration_target = 0.5;
  int pilot_replicates = 20;
  std::optional<double> p;      // fraction policy: alpha = (1 - 1/p)/2
  std::optional<double> alpha;  // explicit override
  std::optional<double> gamma;
  std::optional<double> B;
  std::optional<int> S_max;
  double C = 0.6931471805599453;
  Response response = Response::MeanSqDistance;
  std::uint64_t seed = 0;
  std::string output;
  int threads = 1;

  void validate() const;
  ModelSpec model(int n) const;
  bool operator==(const RateStudyConfig&) const = default;
};

/// alpha actually used: explicit alpha, else from p, else 1 for the full-likelihood
/// families and (1 - 1/2)/2 for the fractional ones.
double resolve_alpha(const RateStudyConfig& cfg);

/// The study's true parameter at sample size n (regression and sparse depend on n).
ParamPoint truth_point(const RateStudyConfig& cfg, int n);

struct ReplicateRow {
  int n = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  double tail_mass = 0.0;
  double mean_sq_distance = 0.0;
  double mean_distance = 0.0;
  double ball_mass = 0.0;
  std::string error;

  bool operator==(const ReplicateRow&) const = default;
};

struct RatePoint {
  int n = 0;
  double eps_n = 0.0;
  int replicates_ok = 0;
  int failures = 0;
  double tail_mass = 0.0;
  double tail_mass_se = 0.0;
  double mean_sq_distance = 0.0;
  double mean_sq_distance_se = 0.0;
  double mean_distance = 0.0;
  double mean_distance_se = 0.0;
  double ball_mass = 0.0;
  double ball_mass_se = 0.0;

  bool operator==(const RatePoint&) const = default;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_se = 0.0;
  int dropped = 0;  // non-positive responses left out
  std::vector<double> residuals;

  bool operator==(const RateFit&) const = default;
};

struct RateCurve {
  double M = 1.0;
  double alpha = 1.0;
  Response response = Response::MeanSqDistance;
  std::vector<RatePoint> points;
  std::vector<ReplicateRow> rows;
  RateFit fit;

  bool operator==(const RateCurve&) const = default;
};

/// Runs every (n, replicate) task and aggregates. Throws if more than 5% of
/// replicates fail.
RateCurve run_rate_study(const RateStudyConfig& cfg);

/// Pilot over the largest n; picks the smallest candidate meeting the calibration target.
double calibrate_M(const RateStudyConfig& cfg);

double response_value(const RatePoint& p, Response r);
RateFit fit_rate_exponent(const RateCurve& curve, Response response);
RateFit fit_power_law(const std::vector<double>& n, const std::vector<double>& y);

inline constexpr int kRateSchemaVersion = 1;

class StudyNotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `path` (CSV rows plus summary block) and `path` + ".json" (manifest).
void persist(const RateCurve& curve, const RateStudyConfig& cfg, const std::filesystem::path& path);
std::pair<RateCurve, RateStudyConfig> load(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& csv_path);

/// Default thread count: EBRATE_THREADS if set and positive, else 1.
int default_threads();

}  // namespace ebrate
