#include "ebrate/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ebrate/numeric.hpp"
#include "ebrate/random.hpp"
#include "ebrate/sieve_mle.hpp"

namespace ebrate {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

/// log L(theta) - log L(mle) with cached sufficient statistics where they exist.
class RatioEvaluator {
 public:
  RatioEvaluator(const ModelSpec& model, const Dataset& data, const ParamPoint& mle)
      : model_(model), data_(data), mle_(mle) {
    validate_dataset(model, data);
    const auto& x = data.observations;
    if (model.family == Family::GaussianLocation) {
      xbar_ = std::accumulate(x.begin(), x.end(), 0.0) / model.n;
    } else if (model.family == Family::Histogram) {
      counts_ = bin_counts(x, static_cast<int>(mle.weights.size()));
    }
    mle_ll_ = model.family == Family::GaussianLocation ? 0.0 : log_likelihood(model, mle, data);
  }

  double operator()(const ParamPoint& theta) const {
    switch (model_.family) {
      case Family::GaussianLocation: {
        const double a = theta.theta[0] - xbar_;
        const double b = mle_.theta[0] - xbar_;
        return -model_.n * (a * a - b * b) / (2.0 * model_.sigma * model_.sigma);
      }
      case Family::Histogram: {
        if (theta.weights.size() != counts_.size()) return kNegInf;
        double acc = static_cast<double>(model_.n) * std::log(static_cast<double>(counts_.size()));
        for (std::size_t s = 0; s < counts_.size(); ++s) {
          if (counts_[s] == 0) continue;
          if (theta.weights[s] <= 0.0) return kNegInf;
          acc += counts_[s] * std::log(theta.weights[s]);
        }
        return acc - mle_ll_;
      }
      default: return log_likelihood(model_, theta, data_) - mle_ll_;
    }
  }

 private:
  const ModelSpec& model_;
  const Dataset& data_;
  const ParamPoint& mle_;
  double xbar_ = 0.0;
  std::vector<int> counts_;
  double mle_ll_ = 0.0;
};

Estimate binomial(long hits, long total) {
  const double p = static_cast<double>(hits) / static_cast<double>(total);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(total))};
}

}  // namespace

Estimate lp1_mass(const EmpiricalPrior& prior, const ModelSpec& model, const Dataset& data,
                  const ParamPoint& mle, double d, double budget, int draws, std::uint64_t seed) {
  if (draws < kMinProbeDraws) invalid("lp1_mass: draws must be at least " + std::to_string(kMinProbeDraws));
  if (!(d > 0.0)) invalid("lp1_mass: d must be positive");
  if (!(budget >= 0.0)) invalid("lp1_mass: budget must be non-negative");
  const RatioEvaluator ratio(model, data, mle);
  const double threshold = -d * budget;
  Rng rng(seed);
  long hits = 0;
  for (int i = 0; i < draws; ++i)
    if (ratio(sample_prior(prior, rng)) >= threshold) ++hits;
  return binomial(hits, draws);
}

// ---------------------------------------------------------------------------

Gp1Result gp1_integral_1d(const GaussianPriorBuilder& builder, const ModelSpec& model,
                          const ParamPoint& theta_star, double p, const Gp1GridCfg& grid, int replicates,
                          std::uint64_t seed) {
  if (model.family != Family::GaussianLocation) invalid("gp1_integral_1d: one-dimensional Gaussian family only");
  if (!(p > 1.0)) invalid("gp1_integral_1d: p must exceed 1");
  if (replicates < 1000) invalid("gp1_integral_1d: replicates must be at least 1000");
  if (grid.points < 3) invalid("gp1_integral_1d: grid needs at least 3 points");

  std::vector<double> means(static_cast<std::size_t>(replicates)), sds(means.size());
  const double center = theta_star.theta.at(0);
  double s_max = 0.0, spread = 0.0;
  for (int r = 0; r < replicates; ++r) {
    const auto data = simulate(model, theta_star, derive_seed(seed, static_cast<std::uint64_t>(r)));
    const GaussianPrior prior = builder(data);
    if (prior.mean.size() != 1 || prior.cov.precision) invalid("gp1_integral_1d: scalar prior required");
    means[static_cast<std::size_t>(r)] = prior.mean(0);
    sds[static_cast<std::size_t>(r)] = std::sqrt(prior.cov.scale);
    s_max = std::max(s_max, sds[static_cast<std::size_t>(r)]);
    spread += (prior.mean(0) - center) * (prior.mean(0) - center);
  }
  spread /= replicates;
  const double half =
      grid.half_width.value_or(grid.width_multiplier * std::sqrt(s_max * s_max + p * spread));
  const double step = 2.0 * half / (grid.points - 1);

  std::vector<double> values(static_cast<std::size_t>(grid.points));
  std::vector<double> logs(means.size());
  const double log_r = std::log(static_cast<double>(replicates));
  for (int g = 0; g < grid.points; ++g) {
    const double theta = center - half + g * step;
    for (std::size_t r = 0; r < means.size(); ++r) logs[r] = p * log_normal_pdf(theta, means[r], sds[r]);
    const double log_mean = log_sum_exp(logs) - log_r;
    values[static_cast<std::size_t>(g)] = std::exp(log_mean / p);
  }
  Gp1Result out;
  out.value = trapezoid(values, step);
  const auto edge = std::max<std::size_t>(2, static_cast<std::size_t>(grid.edge_fraction * grid.points));
  const double left = trapezoid(std::span<const double>(values.data(), edge), step);
  const double right = trapezoid(std::span<const double>(values.data() + values.size() - edge, edge), step);
  out.edge_mass = out.value > 0.0 ? (left + right) / out.value : 0.0;
  out.truncated = out.edge_mass > grid.truncation_limit;
  return out;
}

double gp1_toy_exact(double s, int n, double p, double sigma) {
  if (!(s > 0.0) || n < 1 || !(p > 1.0)) invalid("gp1_toy_exact: need s > 0, n >= 1, p > 1");
  return std::pow(1.0 + p * sigma * sigma / (n * s * s), (p - 1.0) / (2.0 * p));
}

double gp1_toy_expression(double s, int n, double p) {
  return std::pow(s, -(p - 1.0) / p) * std::sqrt(s * s + p / n) / std::pow(s * s / p + 1.0 / n, 1.0 / (2.0 * p));
}

double gp1_toy_constant(double p) { return std::pow(p, 1.0 / (2.0 * p)); }

double gp1_determinant_form(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& fisher, double p) {
  if (!(p > 1.0)) invalid("gp1_determinant_form: p must exceed 1");
  if (psi.rows() != psi.cols() || fisher.rows() != psi.rows() || fisher.cols() != psi.cols())
    invalid("gp1_determinant_form: dimension mismatch");
  const auto d = psi.rows();
  const Eigen::MatrixXd m =
      Eigen::MatrixXd::Identity(d, d) + p * psi * fisher.inverse();
  return std::pow(m.determinant(), 0.5 - 1.0 / (2.0 * p));
}

// ---------------------------------------------------------------------------

double log_gamma_ratio_product(double c, int S, int n) {
  if (!(c > 0.0) || S < 1 || n < 1) invalid("gamma ratio: need c > 0, S >= 1, n >= 1");
  double acc = 0.0;
  for (int j = 1; j <= n; ++j) acc += std::log1p((S + j) / c);
  return acc;
}

bool gamma_ratio_check(double c, int S, int n, double d, double n_eps2) {
  if (!(d > 0.0) || !(n_eps2 > 0.0)) invalid("gamma_ratio_check: d and n eps^2 must be positive");
  return log_gamma_ratio_product(c, S, n) <= d * n_eps2;
}

double reverse_markov_bound(double expectation, double a) {
  if (!(expectation >= 0.0 && expectation <= 1.0)) invalid("reverse_markov_bound: expectation must lie in [0, 1]");
  if (!(a > 0.0 && a < 1.0)) invalid("reverse_markov_bound: a must lie in (0, 1)");
  return std::max(0.0, (expectation - a) / (1.0 - a));
}

double histogram_lp1_bound(double c, int S, int n, double d, double n_eps2) {
  if (!(c > 0.0) || S < 1 || n < 1) invalid("histogram_lp1_bound: need c > 0, S >= 1, n >= 1");
  // Gamma(c+S) c^n / Gamma(c+S+n) = prod_{j=0}^{n-1} (1 + (S+j)/c)^{-1}
  double log_g = 0.0;
  for (int j = 0; j < n; ++j) log_g -= std::log1p((S + j) / c);
  return reverse_markov_bound(std::exp(log_g), std::exp(-d * n_eps2));
}

// ---------------------------------------------------------------------------

Lp2Result lp2_mass(const HierarchicalPrior& prior, const ModelSpec& model, const Dataset& data,
                   const SieveIndex& S_star, double d, int draws, std::uint64_t seed) {
  if (draws < kMinProbeDraws) invalid("lp2_mass: draws must be at least " + std::to_string(kMinProbeDraws));
  if (!(d > 0.0)) invalid("lp2_mass: d must be positive");
  const int size = sieve_size(S_star);
  if (size < prior.min_size || size > prior.max_size) invalid("lp2_mass: S_star not admissible");
  Lp2Result out;
  out.weight_part = std::exp(prior.log_index_prob(S_star));

  std::optional<EmConfig> em;
  if (is_mixture(model.family)) em = EmConfig{};
  const auto fit = sieve_mle(model, S_star, data, em);
  const BasePrior conditional = prior.conditional(S_star);
  const RatioEvaluator ratio(model, data, fit.point);
  const double threshold = -d * size;
  Rng rng(seed);
  long hits = 0;
  for (int i = 0; i < draws; ++i)
    if (ratio(sample_base(conditional, rng)) >= threshold) ++hits;
  const auto est = binomial(hits, draws);
  out.mass_part = est.estimate;
  out.mass_se = est.std_error;
  return out;
}

double sparse_ball_bound(double gamma, int k, double d) {
  if (k == 0) return 1.0;
  const double dk = d * k;
  return std::exp(0.5 * k * std::log(gamma) - gamma * dk + 0.5 * k * std::log(dk) - std::lgamma(0.5 * k + 1.0));
}

double sparse_ball_mass(double gamma, int k, double d) {
  if (k == 0) return 1.0;
  return gamma_p(0.5 * k, gamma * d * k);
}

double implied_constant(double estimate, double n_eps2) {
  if (!(estimate > 0.0) || !(n_eps2 > 0.0)) return std::numeric_limits<double>::infinity();
  return -std::log(estimate) / n_eps2;
}

nlohmann::json ProbeReport::to_json() const {
  nlohmann::json j;
  j["condition"] = condition;
  j["family"] = std::string(to_string(family));
  j["n"] = n;
  j["estimate"] = estimate;
  j["std_error"] = std_error;
  if (bound) j["bound"] = *bound;
  else j["bound"] = nullptr;
  j["pass"] = pass;
  if (implied_constant && std::isfinite(*implied_constant)) j["implied_constant"] = *implied_constant;
  return j;
}

}  // namespace ebrate
