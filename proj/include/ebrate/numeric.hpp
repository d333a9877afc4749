#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ebrate {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454836;

double log_sum_exp(std::span<const double> values);

double normal_cdf(double z);
/// Inverse standard normal CDF (Boost.Math, full double precision).
double normal_quantile(double prob);
inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLogTwoPi - std::log(sd) - 0.5 * z * z;
}

/// log of the binomial coefficient C(n, k).
double log_choose(int n, int k);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized incomplete beta I_x(a, b).
double beta_cdf(double x, double a, double b);

/// Standard error of the mean of an autocorrelated series via
/// non-overlapping batch means (at least two batches).
double batch_means_se(std::span<const double> series, int batches = 50);

/// Mean and standard error of independent values.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_and_se(std::span<const double> values);

/// Composite trapezoid on a uniform grid.
double trapezoid(std::span<const double> values, double step);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);
/// Inverse of format_double; accepts inf/nan. Throws std::invalid_argument.
double parse_double(std::string_view text);

}  // namespace ebrate
