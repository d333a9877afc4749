#include "ebrate/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ebrate/numeric.hpp"
#include "ebrate/random.hpp"

namespace ebrate {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double log_cauchy_pdf(double x, double location, double scale) {
  const double z = (x - location) / scale;
  return -std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

/// Log mixture density at x for normal (sd) or Cauchy (scale) kernels.
double log_mixture_pdf(double x, const std::vector<double>& weights,
                       const std::vector<double>& locations, Kernel kernel, double scale,
                       std::vector<double>& scratch) {
  scratch.resize(weights.size());
  for (std::size_t s = 0; s < weights.size(); ++s) {
    const double lk = kernel == Kernel::Normal ? log_normal_pdf(x, locations[s], scale)
                                               : log_cauchy_pdf(x, locations[s], scale);
    scratch[s] = weights[s] > 0.0 ? std::log(weights[s]) + lk : kNegInf;
  }
  return log_sum_exp(scratch);
}

void check_simplex(const std::vector<double>& w, const char* label) {
  if (w.empty()) invalid(std::string(label) + ": empty weight vector");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) invalid(std::string(label) + ": negative or NaN weight");
    total += v;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance * static_cast<double>(w.size()) + 1e-15)
    invalid(std::string(label) + ": weights do not sum to one");
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::GaussianLocation: return "GaussianLocation";
    case Family::Histogram: return "Histogram";
    case Family::FiniteMixture: return "FiniteMixture";
    case Family::SparseSequence: return "SparseSequence";
    case Family::FixedDesignRegression: return "FixedDesignRegression";
    case Family::AdaptiveMixture: return "AdaptiveMixture";
  }
  return "?";
}

std::string_view to_string(Kernel kernel) { return kernel == Kernel::Normal ? "Normal" : "Cauchy"; }

Family family_from_string(std::string_view name) {
  for (Family f : {Family::GaussianLocation, Family::Histogram, Family::FiniteMixture,
                   Family::SparseSequence, Family::FixedDesignRegression, Family::AdaptiveMixture})
    if (to_string(f) == name) return f;
  invalid("unknown family '" + std::string(name) +
          "' (expected GaussianLocation, Histogram, FiniteMixture, SparseSequence, "
          "FixedDesignRegression or AdaptiveMixture)");
}

Kernel kernel_from_string(std::string_view name) {
  if (name == "Normal") return Kernel::Normal;
  if (name == "Cauchy") return Kernel::Cauchy;
  invalid("unknown kernel '" + std::string(name) + "' (expected Normal or Cauchy)");
}

bool is_iid(Family family) {
  return family == Family::GaussianLocation || family == Family::Histogram ||
         family == Family::FiniteMixture || family == Family::AdaptiveMixture;
}

bool is_mixture(Family family) {
  return family == Family::FiniteMixture || family == Family::AdaptiveMixture;
}

void ModelSpec::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) invalid("ModelSpec: sigma must be positive");
  if (n < 1) invalid("ModelSpec: n must be at least 1");
  if (is_mixture(family) != kernel.has_value())
    invalid("ModelSpec: kernel must be set exactly for mixture families");
  if (family == Family::AdaptiveMixture && kernel != Kernel::Normal)
    invalid("ModelSpec: AdaptiveMixture uses the normal kernel");
  if (family == Family::SparseSequence && sigma != 1.0)
    invalid("ModelSpec: SparseSequence has unit noise (sigma = 1)");
}

ModelSpec ModelSpec::gaussian_location(int n, double sigma) {
  return {Family::GaussianLocation, std::nullopt, sigma, n};
}
ModelSpec ModelSpec::histogram(int n) { return {Family::Histogram, std::nullopt, 1.0, n}; }
ModelSpec ModelSpec::finite_mixture(int n, Kernel kernel, double sigma) {
  return {Family::FiniteMixture, kernel, sigma, n};
}
ModelSpec ModelSpec::sparse_sequence(int n) { return {Family::SparseSequence, std::nullopt, 1.0, n}; }
ModelSpec ModelSpec::regression(int n, double sigma) {
  return {Family::FixedDesignRegression, std::nullopt, sigma, n};
}
ModelSpec ModelSpec::adaptive_mixture(int n) {
  return {Family::AdaptiveMixture, Kernel::Normal, 1.0, n};
}

// ---------------------------------------------------------------------------

int sieve_size(const SieveIndex& sieve) {
  return std::visit(Overloaded{[](const Dimension& d) { return d.size; },
                               [](const Subset& s) { return static_cast<int>(s.indices.size()); },
                               [](const TruncationOrder& t) { return t.order; }},
                    sieve);
}

void validate_sieve(const SieveIndex& sieve, int max_size) {
  std::visit(Overloaded{
                 [&](const Dimension& d) {
                   if (d.size < 1 || d.size > max_size)
                     invalid("Dimension sieve out of range: " + std::to_string(d.size));
                 },
                 [&](const Subset& s) {
                   for (std::size_t i = 0; i < s.indices.size(); ++i) {
                     if (s.indices[i] < 0 || s.indices[i] >= max_size)
                       invalid("Subset index out of range: " + std::to_string(s.indices[i]));
                     if (i > 0 && s.indices[i] <= s.indices[i - 1])
                       invalid("Subset indices must be sorted and distinct");
                   }
                 },
                 [&](const TruncationOrder& t) {
                   if (t.order < 1 || t.order > max_size)
                     invalid("TruncationOrder out of range: " + std::to_string(t.order));
                 }},
             sieve);
}

std::string describe(const SieveIndex& sieve) {
  std::ostringstream out;
  std::visit(Overloaded{[&](const Dimension& d) { out << "Dimension(" << d.size << ")"; },
                        [&](const Subset& s) {
                          out << "Subset{";
                          for (std::size_t i = 0; i < s.indices.size(); ++i)
                            out << (i ? "," : "") << s.indices[i];
                          out << "}";
                        },
                        [&](const TruncationOrder& t) { out << "TruncationOrder(" << t.order << ")"; }},
             sieve);
  return out.str();
}

// ---------------------------------------------------------------------------

ParamPoint ParamPoint::location(double value) {
  ParamPoint p;
  p.sieve = Dimension{1};
  p.theta = {value};
  return p;
}

ParamPoint ParamPoint::histogram(std::vector<double> weights) {
  ParamPoint p;
  p.sieve = Dimension{static_cast<int>(weights.size())};
  p.weights = std::move(weights);
  return p;
}

ParamPoint ParamPoint::mixture(std::vector<double> weights, std::vector<double> locations) {
  ParamPoint p;
  p.sieve = Dimension{static_cast<int>(weights.size())};
  p.weights = std::move(weights);
  p.locations = std::move(locations);
  return p;
}

ParamPoint ParamPoint::adaptive_mixture(std::vector<double> weights, std::vector<double> locations,
                                        double precision) {
  ParamPoint p = mixture(std::move(weights), std::move(locations));
  p.precision = precision;
  return p;
}

ParamPoint ParamPoint::sparse(int n, std::vector<int> subset, const std::vector<double>& values) {
  if (subset.size() != values.size()) invalid("ParamPoint::sparse: subset/value size mismatch");
  ParamPoint p;
  p.theta.assign(static_cast<std::size_t>(n), 0.0);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] < 0 || subset[i] >= n) invalid("ParamPoint::sparse: index out of range");
    p.theta[static_cast<std::size_t>(subset[i])] = values[i];
  }
  p.sieve = Subset{std::move(subset)};
  return p;
}

ParamPoint ParamPoint::regression(std::vector<double> coefficients) {
  ParamPoint p;
  p.sieve = TruncationOrder{static_cast<int>(coefficients.size())};
  p.theta = std::move(coefficients);
  return p;
}

void validate_point(const ModelSpec& model, const ParamPoint& point) {
  const int size = sieve_size(point.sieve);
  switch (model.family) {
    case Family::GaussianLocation:
      if (!std::holds_alternative<Dimension>(point.sieve) || size != 1 || point.theta.size() != 1)
        invalid("GaussianLocation parameter must be a scalar location");
      if (!std::isfinite(point.theta[0])) invalid("GaussianLocation: non-finite location");
      break;
    case Family::Histogram:
      if (!std::holds_alternative<Dimension>(point.sieve) ||
          point.weights.size() != static_cast<std::size_t>(size))
        invalid("Histogram parameter must carry one weight per bin");
      check_simplex(point.weights, "Histogram");
      break;
    case Family::FiniteMixture:
    case Family::AdaptiveMixture:
      if (!std::holds_alternative<Dimension>(point.sieve) ||
          point.weights.size() != static_cast<std::size_t>(size) ||
          point.locations.size() != point.weights.size())
        invalid("Mixture parameter needs S weights and S locations");
      check_simplex(point.weights, "Mixture");
      for (double mu : point.locations)
        if (!std::isfinite(mu)) invalid("Mixture: non-finite location");
      if (model.family == Family::AdaptiveMixture && !(point.precision > 0.0))
        invalid("AdaptiveMixture: precision must be positive");
      break;
    case Family::SparseSequence: {
      const auto* subset = std::get_if<Subset>(&point.sieve);
      if (!subset) invalid("SparseSequence parameter must be indexed by a Subset");
      validate_sieve(point.sieve, model.n);
      if (point.theta.size() != static_cast<std::size_t>(model.n))
        invalid("SparseSequence parameter must have length n");
      std::vector<char> active(static_cast<std::size_t>(model.n), 0);
      for (int i : subset->indices) active[static_cast<std::size_t>(i)] = 1;
      for (std::size_t i = 0; i < point.theta.size(); ++i) {
        if (!active[i] && point.theta[i] != 0.0)
          invalid("SparseSequence: coordinate outside the subset must be exactly zero");
        if (!std::isfinite(point.theta[i])) invalid("SparseSequence: non-finite coordinate");
      }
      break;
    }
    case Family::FixedDesignRegression:
      if (!std::holds_alternative<TruncationOrder>(point.sieve) ||
          point.theta.size() != static_cast<std::size_t>(size) || size < 1)
        invalid("Regression parameter must hold TruncationOrder(S) coefficients");
      break;
  }
}

void validate_dataset(const ModelSpec& model, const Dataset& data) {
  if (data.observations.size() != static_cast<std::size_t>(model.n))
    invalid("Dataset length " + std::to_string(data.observations.size()) +
            " does not match n = " + std::to_string(model.n));
  const bool wants_design = model.family == Family::FixedDesignRegression;
  if (wants_design != data.design.has_value())
    invalid("Dataset design must be present exactly for regression");
  if (wants_design && data.design->size() != data.observations.size())
    invalid("Dataset design length mismatch");
}

// ---------------------------------------------------------------------------

double LinearDensity::pdf(double x) const {
  if (x < 0.0 || x > 1.0) return 0.0;
  return 1.0 + slope * (2.0 * x - 1.0);
}

double LinearDensity::cdf(double x) const {
  x = std::clamp(x, 0.0, 1.0);
  return x + slope * (x * x - x);
}

double LinearDensity::quantile(double u) const {
  const double a = slope;
  const double b = 1.0 - a;
  // Root of a x^2 + (1 - a) x - u = 0 in [0, 1], cancellation-free form.
  return 2.0 * u / (b + std::sqrt(b * b + 4.0 * a * u));
}

double LinearDensity::root_integral(double lo, double hi) const {
  const double u = std::sqrt(pdf(hi));
  const double v = std::sqrt(pdf(lo));
  return 2.0 * (hi - lo) * (u * u + u * v + v * v) / (3.0 * (u + v));
}

std::vector<double> equispaced_design(int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>(i + 1) / n;
  return t;
}

double fourier_basis(int j, double t) {
  if (j < 1) invalid("fourier_basis: index is 1-based");
  if (j == 1) return 1.0;
  const int k = j / 2;
  const double arg = 2.0 * std::numbers::pi * k * t;
  return std::numbers::sqrt2 * (j % 2 == 0 ? std::cos(arg) : std::sin(arg));
}

Eigen::MatrixXd fourier_design(const std::vector<double>& design, int columns) {
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(design.size()), columns);
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    for (int j = 0; j < columns; ++j)
      phi(i, j) = fourier_basis(j + 1, design[static_cast<std::size_t>(i)]);
  return phi;
}

std::vector<double> regression_function(const std::vector<double>& coefficients,
                                        const std::vector<double>& design) {
  std::vector<double> f(design.size(), 0.0);
  for (std::size_t i = 0; i < design.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < coefficients.size(); ++j)
      if (coefficients[j] != 0.0)
        acc += coefficients[j] * fourier_basis(static_cast<int>(j) + 1, design[i]);
    f[i] = acc;
  }
  return f;
}

// ---------------------------------------------------------------------------

Dataset simulate(const ModelSpec& model, const ParamPoint& truth, std::uint64_t seed) {
  model.validate();
  if (model.family == Family::FixedDesignRegression) {
    if (!std::holds_alternative<TruncationOrder>(truth.sieve) ||
        truth.theta.size() != static_cast<std::size_t>(sieve_size(truth.sieve)))
      invalid("simulate: regression truth must be a coefficient vector");
  } else if (model.family == Family::SparseSequence) {
    validate_point(model, truth);
  } else {
    validate_point(model, truth);
  }

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset data;
  data.seed = seed;
  auto& x = data.observations;
  x.resize(static_cast<std::size_t>(model.n));
  const auto n = static_cast<std::size_t>(model.n);

  switch (model.family) {
    case Family::GaussianLocation:
      for (auto& v : x) v = truth.theta[0] + model.sigma * gauss(rng);
      break;
    case Family::SparseSequence:
      for (std::size_t i = 0; i < n; ++i) x[i] = truth.theta[i] + gauss(rng);
      break;
    case Family::FixedDesignRegression: {
      data.design = equispaced_design(model.n);
      const auto f = regression_function(truth.theta, *data.design);
      for (std::size_t i = 0; i < n; ++i) x[i] = f[i] + model.sigma * gauss(rng);
      break;
    }
    case Family::Histogram: {
      std::discrete_distribution<int> bin(truth.weights.begin(), truth.weights.end());
      const double width = 1.0 / static_cast<double>(truth.weights.size());
      for (auto& v : x) {
        const int s = bin(rng);
        v = (s + unif(rng)) * width;
      }
      break;
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture: {
      std::discrete_distribution<int> comp(truth.weights.begin(), truth.weights.end());
      const bool cauchy = model.kernel == Kernel::Cauchy;
      const double scale =
          model.family == Family::AdaptiveMixture ? 1.0 / std::sqrt(truth.precision) : model.sigma;
      for (auto& v : x) {
        const double mu = truth.locations[static_cast<std::size_t>(comp(rng))];
        if (cauchy) {
          v = mu + scale * std::tan(std::numbers::pi * (unif(rng) - 0.5));
        } else {
          v = mu + scale * gauss(rng);
        }
      }
      break;
    }
  }
  return data;
}

Dataset simulate(const ModelSpec& model, const LinearDensity& truth, std::uint64_t seed) {
  model.validate();
  if (model.family != Family::Histogram) invalid("simulate: LinearDensity truth is for Histogram");
  if (!(std::abs(truth.slope) < 1.0)) invalid("LinearDensity: |slope| must be below 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset data;
  data.seed = seed;
  data.observations.resize(static_cast<std::size_t>(model.n));
  for (auto& v : data.observations) v = truth.quantile(unif(rng));
  return data;
}

std::vector<int> bin_counts(const std::vector<double>& observations, int bins) {
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double x : observations) {
    if (x < 0.0 || x > 1.0) invalid("bin_counts: observation outside [0, 1]");
    const int s = std::min(bins - 1, static_cast<int>(std::floor(x * bins)));
    ++counts[static_cast<std::size_t>(s)];
  }
  return counts;
}

double log_likelihood(const ModelSpec& model, const ParamPoint& theta, const Dataset& data) {
  validate_dataset(model, data);
  const auto& x = data.observations;
  switch (model.family) {
    case Family::GaussianLocation: {
      double acc = 0.0;
      for (double v : x) acc += log_normal_pdf(v, theta.theta[0], model.sigma);
      return acc;
    }
    case Family::SparseSequence: {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += log_normal_pdf(x[i], theta.theta[i], 1.0);
      return acc;
    }
    case Family::FixedDesignRegression: {
      const auto f = regression_function(theta.theta, *data.design);
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += log_normal_pdf(x[i], f[i], model.sigma);
      return acc;
    }
    case Family::Histogram: {
      const int bins = static_cast<int>(theta.weights.size());
      const auto counts = bin_counts(x, bins);
      double acc = static_cast<double>(x.size()) * std::log(static_cast<double>(bins));
      for (int s = 0; s < bins; ++s) {
        const auto ns = counts[static_cast<std::size_t>(s)];
        if (ns == 0) continue;
        const double w = theta.weights[static_cast<std::size_t>(s)];
        if (w <= 0.0) return kNegInf;
        acc += ns * std::log(w);
      }
      return acc;
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture: {
      const Kernel kernel = *model.kernel;
      const double scale = model.family == Family::AdaptiveMixture
                               ? 1.0 / std::sqrt(theta.precision)
                               : model.sigma;
      std::vector<double> scratch;
      double acc = 0.0;
      for (double v : x) acc += log_mixture_pdf(v, theta.weights, theta.locations, kernel, scale, scratch);
      return acc;
    }
  }
  return kNegInf;
}

double log_likelihood_ratio(const ModelSpec& model, const ParamPoint& theta,
                            const ParamPoint& theta_ref, const Dataset& data) {
  const double a = log_likelihood(model, theta, data);
  const double b = log_likelihood(model, theta_ref, data);
  if (a == kNegInf && b == kNegInf) return 0.0;
  return a - b;
}

bool in_Ln(const ModelSpec& model, const ParamPoint& theta, const Dataset& data,
           const ParamPoint& mle, double d, double budget) {
  if (!(d > 0.0)) invalid("in_Ln: d must be positive");
  if (!(budget >= 0.0)) invalid("in_Ln: budget must be non-negative");
  return log_likelihood_ratio(model, theta, mle, data) >= -d * budget;
}

}  // namespace ebrate
