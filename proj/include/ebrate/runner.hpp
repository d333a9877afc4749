#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ebrate/config.hpp"
#include "ebrate/probe.hpp"
#include "ebrate/rate_lab.hpp"

namespace ebrate {

/// Data for a single-n config, drawn from its truth.
Dataset simulate_from(const ProbeConfig& cfg);
ParamPoint truth_point(const ProbeConfig& cfg);

/// Runs every condition listed in cfg.conditions.
std::vector<ProbeReport> run_probes(const ProbeConfig& cfg);

/// Exponent of n in the expected response, where the family fixes one.
std::optional<double> target_exponent(const RateStudyConfig& cfg, Response response);
double target_tolerance(const RateStudyConfig& cfg);

struct ReportRow {
  std::string label;
  Family family = Family::GaussianLocation;
  Response response = Response::MeanSqDistance;
  int n_min = 0;
  int n_max = 0;
  double M = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
  std::optional<double> target;
  double tolerance = 0.0;
  int failures = 0;
  bool pass = false;
};

ReportRow report_row(const RateCurve& curve, const RateStudyConfig& cfg, const std::string& label);
/// Comma-separated table with a header line.
std::string render_report(const std::vector<ReportRow>& rows);

}  // namespace ebrate
