#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace ebrate {

// ---------------------------------------------------------------------------
// Model families
// ---------------------------------------------------------------------------

enum class Family {
  GaussianLocation,
  Histogram,
  FiniteMixture,
  SparseSequence,
  FixedDesignRegression,
  AdaptiveMixture,
};

enum class Kernel { Normal, Cauchy };

std::string_view to_string(Family family);
std::string_view to_string(Kernel kernel);
Family family_from_string(std::string_view name);
Kernel kernel_from_string(std::string_view name);

/// True for families whose joint density is a product of n identical marginals.
bool is_iid(Family family);
bool is_mixture(Family family);

struct ModelSpec {
  Family family = Family::GaussianLocation;
  std::optional<Kernel> kernel;  // mixture families only
  double sigma = 1.0;            // noise or kernel scale where the family fixes one
  int n = 1;                     // sample size / vector length

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  static ModelSpec gaussian_location(int n, double sigma = 1.0);
  static ModelSpec histogram(int n);
  static ModelSpec finite_mixture(int n, Kernel kernel, double sigma = 1.0);
  static ModelSpec sparse_sequence(int n);
  static ModelSpec regression(int n, double sigma = 1.0);
  static ModelSpec adaptive_mixture(int n);

  bool operator==(const ModelSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Sieve indices
// ---------------------------------------------------------------------------

/// Fixed dimension S (histogram bins, mixture components).
struct Dimension {
  int size = 1;
  bool operator==(const Dimension&) const = default;
};

/// Active coordinates of a sparse vector. Indices are 0-based, sorted, distinct.
struct Subset {
  std::vector<int> indices;
  bool operator==(const Subset&) const = default;
};

/// Number of leading basis functions kept.
struct TruncationOrder {
  int order = 1;
  bool operator==(const TruncationOrder&) const = default;
};

using SieveIndex = std::variant<Dimension, Subset, TruncationOrder>;

/// |S| for every variant.
int sieve_size(const SieveIndex& sieve);
/// Throws std::invalid_argument unless the index is well formed with respect to
/// an upper bound `max_size` (T_n, or n for subsets).
void validate_sieve(const SieveIndex& sieve, int max_size);
std::string describe(const SieveIndex& sieve);

// ---------------------------------------------------------------------------
// Parameter points
// ---------------------------------------------------------------------------

/// Family-specific coordinates. Unused fields stay empty.
///   GaussianLocation:      theta = {location}
///   Histogram:             weights (simplex, one per bin)
///   FiniteMixture:         weights, locations
///   SparseSequence:        theta (length n, zero off the subset)
///   FixedDesignRegression: theta (first S basis coefficients)
///   AdaptiveMixture:       weights, locations, precision
struct ParamPoint {
  SieveIndex sieve = Dimension{1};
  std::vector<double> theta;
  std::vector<double> weights;
  std::vector<double> locations;
  double precision = 0.0;

  static ParamPoint location(double value);
  static ParamPoint histogram(std::vector<double> weights);
  static ParamPoint mixture(std::vector<double> weights, std::vector<double> locations);
  static ParamPoint adaptive_mixture(std::vector<double> weights, std::vector<double> locations,
                                     double precision);
  /// Embeds `values` at the (0-based) subset positions of a length-n zero vector.
  static ParamPoint sparse(int n, std::vector<int> subset, const std::vector<double>& values);
  static ParamPoint regression(std::vector<double> coefficients);

  bool operator==(const ParamPoint&) const = default;
};

inline constexpr double kSimplexTolerance = 1e-12;

/// Throws std::invalid_argument if `point` is not a valid parameter of `model`.
void validate_point(const ModelSpec& model, const ParamPoint& point);

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<double> observations;
  std::optional<std::vector<double>> design;  // regression only: t_i = i/n
  std::uint64_t seed = 0;

  bool operator==(const Dataset&) const = default;
};

void validate_dataset(const ModelSpec& model, const Dataset& data);

/// Density p(x) = 1 + slope * (2x - 1) on [0, 1]; Lipschitz, bounded away
/// from zero for |slope| < 1. Used as a non-histogram truth for histograms.
struct LinearDensity {
  double slope = 0.5;

  double pdf(double x) const;
  double cdf(double x) const;
  double quantile(double u) const;
  /// Integral of sqrt(p) over [lo, hi].
  double root_integral(double lo, double hi) const;
};

/// Equispaced design t_i = i/n, i = 1..n.
std::vector<double> equispaced_design(int n);

/// Fourier basis on [0,1], 1-based: phi_1 = 1, phi_{2k} = sqrt2 cos(2 pi k t),
/// phi_{2k+1} = sqrt2 sin(2 pi k t).
double fourier_basis(int j, double t);
/// n x S matrix (phi_j(t_i)).
Eigen::MatrixXd fourier_design(const std::vector<double>& design, int columns);
/// f_theta at each design point.
std::vector<double> regression_function(const std::vector<double>& coefficients,
                                        const std::vector<double>& design);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Deterministic in (model, truth, seed).
Dataset simulate(const ModelSpec& model, const ParamPoint& truth, std::uint64_t seed);
/// Histogram family with a continuous truth.
Dataset simulate(const ModelSpec& model, const LinearDensity& truth, std::uint64_t seed);

/// Bin counts on S equal-width bins of [0, 1]; x = 1 goes to the last bin.
std::vector<int> bin_counts(const std::vector<double>& observations, int bins);

/// log L_n(theta) with Lebesgue (or counting) reference measure.
/// Returns -infinity when theta puts zero mass on an observed bin.
double log_likelihood(const ModelSpec& model, const ParamPoint& theta, const Dataset& data);

/// log L_n(theta) - log L_n(theta_ref); NaN-free when one side is -infinity.
double log_likelihood_ratio(const ModelSpec& model, const ParamPoint& theta,
                            const ParamPoint& theta_ref, const Dataset& data);

/// Default constant d of the likelihood-ratio neighborhood.
inline constexpr double kDefaultNeighborhoodD = 2.0;

/// True iff L_n(theta) >= exp(-d * budget) * L_n(mle). Inclusive at the boundary.
bool in_Ln(const ModelSpec& model, const ParamPoint& theta, const Dataset& data,
           const ParamPoint& mle, double d, double budget);

}  // namespace ebrate
