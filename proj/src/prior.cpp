#include "ebrate/prior.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "ebrate/numeric.hpp"

namespace ebrate {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double check_gamma(double gamma) {
  if (!(gamma > 0.0) || !(gamma < 1.0))
    invalid("gamma must lie in (0, 1), got " + std::to_string(gamma));
  return gamma;
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
  else j[key] = nullptr;
}

template <class T>
void get(const json& j, const char* key, std::optional<T>& v) {
  if (!j.contains(key) || j.at(key).is_null()) v.reset();
  else v = j.at(key).get<T>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedules

double toy_prior_sd(double C, int n) {
  if (!(C > 0.0)) invalid("toy_prior_sd: C must be positive");
  if (n < 1) invalid("toy_prior_sd: n must be positive");
  // Phi^{-1}((1 + e^{-C})/2) = sqrt2 * erfinv(e^{-C}), accurate for large C
  const double z = std::sqrt(2.0) * boost::math::erf_inv(std::exp(-C));
  return std::sqrt(2.0 / n) / z;
}

Schedule compute_schedule(Family family, int n, std::optional<double> beta, std::optional<double> b) {
  ScheduleOptions opts;
  opts.beta = beta;
  opts.b = b;
  return compute_schedule(family, n, opts);
}

Schedule compute_schedule(Family family, int n, const ScheduleOptions& opts) {
  if (n < 3) invalid("compute_schedule: n must be at least 3, got " + std::to_string(n));
  if (!(opts.sigma > 0.0)) invalid("compute_schedule: sigma must be positive");
  Schedule s;
  s.family = family;
  s.n = n;
  s.beta = opts.beta;
  s.sigma = opts.sigma;
  const double nd = n;
  const double logn = std::log(nd);

  switch (family) {
    case Family::GaussianLocation: {
      if (!(opts.C > 0.0)) invalid("C must be positive");
      s.epsilon_n = 1.0 / std::sqrt(nd);
      s.C = opts.C;
      const double z = std::sqrt(2.0) * boost::math::erf_inv(std::exp(-opts.C));
      s.psi = z * z / (2.0 * opts.sigma * opts.sigma);
      s.S = 1;
      break;
    }
    case Family::Histogram: {
      if (!opts.beta) invalid("beta is required for Histogram");
      const double beta_v = *opts.beta;
      if (!(beta_v > 0.0 && beta_v <= 1.0))
        invalid("beta must lie in (0, 1] for Histogram, got " + std::to_string(beta_v));
      const double kappa = beta_v / (2.0 * beta_v + 1.0);
      s.kappa = kappa;
      s.epsilon_n = std::pow(nd, -kappa) * std::pow(logn, kappa);
      s.S = std::max(1, static_cast<int>(std::floor(nd * s.epsilon_n * s.epsilon_n / logn)));
      if (opts.S_max) s.S = std::min(s.S, *opts.S_max);
      s.c = nd / (s.epsilon_n * s.epsilon_n);
      break;
    }
    case Family::FiniteMixture: {
      s.epsilon_n = logn / std::sqrt(nd);
      s.S = std::max(1, static_cast<int>(std::floor(logn)));
      s.c = nd * nd / (logn * logn);
      const double bconst = opts.d / 2.0;
      s.delta = std::sqrt(6.0 * bconst * opts.sigma * opts.sigma) * s.epsilon_n / 2.0;
      s.B = opts.B.value_or(1.0) * std::sqrt(std::log(1.0 / s.epsilon_n));
      break;
    }
    case Family::SparseSequence: {
      const int sparsity = std::max(1, opts.s_star.value_or(1));
      if (sparsity >= n) invalid("s_star must be below n");
      s.s_star = opts.s_star.value_or(0);
      s.epsilon_n = std::sqrt(sparsity / nd * std::log(nd / sparsity));
      s.S = sparsity;
      s.gamma = check_gamma(opts.gamma.value_or(0.1));
      s.B = opts.B.value_or(1.0);
      if (!(*s.B > 0.0)) invalid("B must be positive");
      s.S_max = n;
      break;
    }
    case Family::FixedDesignRegression: {
      if (opts.beta) {
        if (!(*opts.beta > 0.5)) invalid("beta must exceed 1/2 for regression");
        const double rate = *opts.beta / (2.0 * *opts.beta + 1.0);
        s.kappa = rate;
        s.epsilon_n = std::pow(nd, -rate);
        s.S = std::max(1, static_cast<int>(std::ceil(std::pow(nd, 1.0 / (2.0 * *opts.beta + 1.0)))));
      } else {
        s.epsilon_n = 1.0 / std::sqrt(nd);
        s.S = 1;
      }
      s.gamma = check_gamma(opts.gamma.value_or(0.1));
      s.B = opts.B.value_or(1.0);
      if (!(*s.B > 0.0)) invalid("B must be positive");
      s.S_max = opts.S_max.value_or(std::min(n - 1, static_cast<int>(std::ceil(2.0 * std::sqrt(nd)))));
      if (*s.S_max < 1 || *s.S_max > n - 1) invalid("S_max must lie in 1..n-1");
      s.S = std::min(s.S, *s.S_max);
      break;
    }
    case Family::AdaptiveMixture: {
      const double bv = opts.b.value_or(2.5);
      if (!(bv > 2.0)) invalid("b must exceed 2 for AdaptiveMixture, got " + std::to_string(bv));
      s.b = bv;
      if (opts.beta) {
        if (!(*opts.beta > 0.0)) invalid("beta must be positive");
        s.epsilon_n = logn * std::pow(nd, -*opts.beta / (2.0 * *opts.beta + 1.0));
      } else {
        s.epsilon_n = logn / std::sqrt(nd);
      }
      s.B = logn * logn;
      s.B_l = 1.0 / nd;
      s.B_u = std::pow(nd, bv - 2.0);
      s.D = 1.0;
      s.r = 1.5;
      s.S_max = opts.S_max.value_or(5);
      if (*s.S_max < 1) invalid("S_max must be >= 1");
      s.S = 1;
      s.per_S = true;
      break;
    }
  }
  s.validate();
  return s;
}

ComponentConstants adaptive_constants(const Schedule& schedule, int S) {
  if (!schedule.per_S || !schedule.b) invalid("adaptive_constants: AdaptiveMixture schedule required");
  if (S < 1) invalid("adaptive_constants: S must be >= 1");
  const double nd = schedule.n;
  ComponentConstants k;
  k.c = nd * nd / S;
  k.delta = std::sqrt(static_cast<double>(S)) * std::pow(nd, -(*schedule.b + 1.5));
  k.psi = S / nd;
  return k;
}

void Schedule::validate() const {
  if (n < 3) invalid("Schedule: n must be >= 3");
  if (!(epsilon_n > 0.0) || !std::isfinite(epsilon_n)) invalid("Schedule: epsilon_n must be positive");
  if (S < 1) invalid("Schedule: S must be >= 1");
  for (const auto* v : {&c, &delta, &B, &psi, &B_l, &B_u, &gamma, &kappa, &C, &D, &r, &b})
    if (*v && !(**v > 0.0)) invalid("Schedule: derived constants must be strictly positive");
  if (B_l && B_u && !(*B_l < *B_u)) invalid("Schedule: need B_l < B_u");
  if (S_max && *S_max < 1) invalid("Schedule: S_max must be >= 1");
}

json Schedule::to_json() const {
  json j;
  j["family"] = std::string(to_string(family));
  j["n"] = n;
  put(j, "beta", beta);
  j["epsilon_n"] = epsilon_n;
  j["S"] = S;
  put(j, "c", c);
  put(j, "delta", delta);
  put(j, "B", B);
  put(j, "psi", psi);
  put(j, "B_l", B_l);
  put(j, "B_u", B_u);
  put(j, "gamma", gamma);
  put(j, "kappa", kappa);
  put(j, "C", C);
  put(j, "D", D);
  put(j, "r", r);
  put(j, "b", b);
  put(j, "S_max", S_max);
  put(j, "s_star", s_star);
  j["sigma"] = sigma;
  j["per_S"] = per_S;
  return j;
}

Schedule Schedule::from_json(const json& j) {
  Schedule s;
  s.family = family_from_string(j.at("family").get<std::string>());
  s.n = j.at("n").get<int>();
  get(j, "beta", s.beta);
  s.epsilon_n = j.at("epsilon_n").get<double>();
  s.S = j.at("S").get<int>();
  get(j, "c", s.c);
  get(j, "delta", s.delta);
  get(j, "B", s.B);
  get(j, "psi", s.psi);
  get(j, "B_l", s.B_l);
  get(j, "B_u", s.B_u);
  get(j, "gamma", s.gamma);
  get(j, "kappa", s.kappa);
  get(j, "C", s.C);
  get(j, "D", s.D);
  get(j, "r", s.r);
  get(j, "b", s.b);
  get(j, "S_max", s.S_max);
  get(j, "s_star", s.s_star);
  s.sigma = j.value("sigma", 1.0);
  s.per_S = j.value("per_S", false);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Covariances and densities

CovarianceDescriptor CovarianceDescriptor::isotropic(double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) invalid("covariance scale must be positive");
  CovarianceDescriptor c;
  c.scale = scale;
  return c;
}

CovarianceDescriptor CovarianceDescriptor::structured(double scale, Eigen::MatrixXd precision) {
  CovarianceDescriptor c = isotropic(scale);
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) invalid("covariance structure is not positive definite");
  c.chol = llt.matrixL();
  c.log_det_precision = 2.0 * c.chol.diagonal().array().log().sum();
  c.precision = std::move(precision);
  return c;
}

Eigen::MatrixXd CovarianceDescriptor::covariance(int dim) const {
  if (!precision) return scale * Eigen::MatrixXd::Identity(dim, dim);
  Eigen::LLT<Eigen::MatrixXd> llt(*precision);
  return scale * llt.solve(Eigen::MatrixXd::Identity(dim, dim));
}

double log_dirichlet_density(const std::vector<double>& alpha, const std::vector<double>& x) {
  if (alpha.size() != x.size()) return kNegInf;
  double total = 0.0, a0 = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) return kNegInf;
    total += x[i];
    a0 += alpha[i];
    acc -= std::lgamma(alpha[i]);
    if (alpha[i] != 1.0) {
      if (x[i] == 0.0) return alpha[i] > 1.0 ? kNegInf : std::numeric_limits<double>::infinity();
      acc += (alpha[i] - 1.0) * std::log(x[i]);
    }
  }
  if (std::abs(total - 1.0) > kSimplexTolerance * static_cast<double>(x.size()) + 1e-15) return kNegInf;
  return acc + std::lgamma(a0);
}

std::vector<double> sample_dirichlet(const std::vector<double>& alpha, Rng& rng) {
  std::vector<double> g(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    std::gamma_distribution<double> gamma(alpha[i], 1.0);
    g[i] = gamma(rng);
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

namespace {

Eigen::VectorXd gaussian_coordinates(const GaussianPrior& prior, const ParamPoint& theta, bool& ok) {
  ok = true;
  const auto d = prior.mean.size();
  Eigen::VectorXd x(d);
  switch (prior.family) {
    case Family::SparseSequence: {
      const auto* subset = std::get_if<Subset>(&theta.sieve);
      if (!subset || !(*subset == std::get<Subset>(prior.sieve)) ||
          theta.theta.size() != static_cast<std::size_t>(prior.ambient)) {
        ok = false;
        return x;
      }
      std::vector<char> active(theta.theta.size(), 0);
      for (Eigen::Index i = 0; i < d; ++i) {
        const auto idx = static_cast<std::size_t>(subset->indices[static_cast<std::size_t>(i)]);
        x(i) = theta.theta[idx];
        active[idx] = 1;
      }
      for (std::size_t i = 0; i < theta.theta.size(); ++i)
        if (!active[i] && theta.theta[i] != 0.0) ok = false;
      return x;
    }
    default:
      if (theta.theta.size() != static_cast<std::size_t>(d) || !(theta.sieve == prior.sieve)) {
        ok = false;
        return x;
      }
      for (Eigen::Index i = 0; i < d; ++i) x(i) = theta.theta[static_cast<std::size_t>(i)];
      return x;
  }
}

ParamPoint gaussian_point(const GaussianPrior& prior, const Eigen::VectorXd& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  switch (prior.family) {
    case Family::GaussianLocation: return ParamPoint::location(v.at(0));
    case Family::SparseSequence:
      return ParamPoint::sparse(prior.ambient, std::get<Subset>(prior.sieve).indices, v);
    case Family::FixedDesignRegression: return ParamPoint::regression(std::move(v));
    default: invalid("GaussianPrior: unsupported family");
  }
}

double log_gaussian_density(const GaussianPrior& prior, const Eigen::VectorXd& x) {
  const auto d = static_cast<double>(prior.mean.size());
  if (prior.mean.size() == 0) return 0.0;
  const Eigen::VectorXd q = x - prior.mean;
  double quad;
  if (prior.cov.precision) {
    quad = (prior.cov.chol.transpose() * q).squaredNorm();
  } else {
    quad = q.squaredNorm();
  }
  return -0.5 * d * (kLogTwoPi + std::log(prior.cov.scale)) + 0.5 * prior.cov.log_det_precision -
         0.5 * quad / prior.cov.scale;
}

Eigen::VectorXd sample_gaussian(const GaussianPrior& prior, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd xi(prior.mean.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = gauss(rng);
  if (prior.cov.precision)
    xi = prior.cov.chol.transpose().triangularView<Eigen::Upper>().solve(xi);
  return prior.mean + std::sqrt(prior.cov.scale) * xi;
}

double log_mixture_param_density(const MixtureParamPrior& prior, const ParamPoint& theta) {
  const auto S = prior.location_boxes.size();
  if (theta.weights.size() != S || theta.locations.size() != S) return kNegInf;
  double acc = log_dirichlet_density(prior.weights.alpha, theta.weights);
  if (acc == kNegInf) return acc;
  for (std::size_t s = 0; s < S; ++s) {
    const auto [lo, hi] = prior.location_boxes[s];
    if (theta.locations[s] < lo || theta.locations[s] > hi) return kNegInf;
    acc -= std::log(hi - lo);
  }
  if (prior.precision_box) {
    const auto [lo, hi] = *prior.precision_box;
    if (theta.precision < lo || theta.precision > hi) return kNegInf;
    acc -= std::log(hi - lo);
  }
  return acc;
}

ParamPoint sample_mixture_param(const MixtureParamPrior& prior, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto w = sample_dirichlet(prior.weights.alpha, rng);
  std::vector<double> mu(prior.location_boxes.size());
  for (std::size_t s = 0; s < mu.size(); ++s) {
    const auto [lo, hi] = prior.location_boxes[s];
    mu[s] = lo + (hi - lo) * unif(rng);
  }
  if (prior.precision_box) {
    const auto [lo, hi] = *prior.precision_box;
    return ParamPoint::adaptive_mixture(std::move(w), std::move(mu), lo + (hi - lo) * unif(rng));
  }
  return ParamPoint::mixture(std::move(w), std::move(mu));
}

SieveIndex sample_index(const HierarchicalPrior& prior, Rng& rng) {
  std::vector<double> p(prior.size_log_probs.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(prior.size_log_probs[i]);
  std::discrete_distribution<int> pick(p.begin(), p.end());
  const int size = prior.min_size + pick(rng);
  switch (prior.scheme) {
    case WeightScheme::SparseSubset: {
      // Floyd's algorithm for a uniform size-k subset of {0..n-1}
      std::vector<int> chosen;
      chosen.reserve(static_cast<std::size_t>(size));
      std::vector<char> taken(static_cast<std::size_t>(prior.n), 0);
      for (int j = prior.n - size; j < prior.n; ++j) {
        std::uniform_int_distribution<int> u(0, j);
        int t = u(rng);
        if (taken[static_cast<std::size_t>(t)]) t = j;
        taken[static_cast<std::size_t>(t)] = 1;
        chosen.push_back(t);
      }
      std::sort(chosen.begin(), chosen.end());
      return Subset{std::move(chosen)};
    }
    case WeightScheme::TruncationOrder: return TruncationOrder{size};
    case WeightScheme::AdaptiveMixture: return Dimension{size};
  }
  return Dimension{size};
}

}  // namespace

// ---------------------------------------------------------------------------
// Model weights

double log_model_weight(WeightScheme scheme, const SieveIndex& S, int n, const WeightConstants& k) {
  const int size = sieve_size(S);
  if (size > n) invalid("model_weight: |S| = " + std::to_string(size) + " exceeds n = " + std::to_string(n));
  switch (scheme) {
    case WeightScheme::SparseSubset:
      if (!(k.B > 0.0)) invalid("model_weight: B must be positive");
      return -log_choose(n, size) - k.B * size;
    case WeightScheme::TruncationOrder:
      if (!(k.B > 0.0)) invalid("model_weight: B must be positive");
      if (size < 1) invalid("model_weight: truncation order must be >= 1");
      return -k.B * size;
    case WeightScheme::AdaptiveMixture:
      if (!(k.D > 0.0)) invalid("model_weight: D must be positive");
      if (!(k.r > 1.0)) invalid("model_weight: r must exceed 1");
      if (size < 1) invalid("model_weight: S must be >= 1");
      return -k.D * std::pow(std::log(static_cast<double>(size)), k.r) * size;
  }
  return kNegInf;
}

double model_weight(WeightScheme scheme, const SieveIndex& S, int n, const WeightConstants& k) {
  return std::exp(log_model_weight(scheme, S, n, k));
}

double HierarchicalPrior::log_size_prob(int size) const {
  if (size < min_size || size > max_size) return kNegInf;
  return size_log_probs[static_cast<std::size_t>(size - min_size)];
}

double HierarchicalPrior::log_index_prob(const SieveIndex& S) const {
  const int size = sieve_size(S);
  const double lp = log_size_prob(size);
  if (scheme == WeightScheme::SparseSubset) return lp - log_choose(n, size);
  return lp;
}

namespace {

std::vector<double> normalized_size_log_probs(WeightScheme scheme, int n, int lo, int hi,
                                              const WeightConstants& k) {
  std::vector<double> lw;
  for (int s = lo; s <= hi; ++s) {
    double v;
    if (scheme == WeightScheme::SparseSubset) {
      // total over the C(n, s) subsets of this size
      v = -k.B * s;
    } else if (scheme == WeightScheme::TruncationOrder) {
      v = log_model_weight(scheme, TruncationOrder{s}, n, k);
    } else {
      v = log_model_weight(scheme, Dimension{s}, n, k);
    }
    lw.push_back(v);
  }
  const double z = log_sum_exp(lw);
  for (auto& v : lw) v -= z;
  return lw;
}

}  // namespace

// ---------------------------------------------------------------------------
// Builders

EmConfig em_config_for(const Schedule& schedule, std::uint64_t seed) {
  EmConfig em;
  em.seed = seed;
  if (schedule.B) em.location_bound = *schedule.B;
  if (schedule.B_l) em.precision_lo = *schedule.B_l;
  if (schedule.B_u) em.precision_hi = *schedule.B_u;
  return em;
}

EmpiricalPrior build_prior(Family family, const ParamPoint& mle, const Schedule& schedule,
                           std::optional<double> gamma, const std::optional<Eigen::MatrixXd>& psi_matrix) {
  switch (family) {
    case Family::GaussianLocation: {
      double psi = schedule.psi.value_or(0.0);
      if (psi_matrix) {
        if (psi_matrix->rows() != 1 || psi_matrix->cols() != 1) invalid("psi_matrix must be 1x1");
        psi = (*psi_matrix)(0, 0);
      }
      if (!(psi > 0.0)) invalid("GaussianLocation prior needs psi > 0");
      GaussianPrior p;
      p.family = family;
      p.sieve = Dimension{1};
      p.ambient = 1;
      p.mean = Eigen::VectorXd::Constant(1, mle.theta.at(0));
      p.cov = CovarianceDescriptor::isotropic(1.0 / (schedule.n * psi));
      return p;
    }
    case Family::Histogram: {
      if (!schedule.c) invalid("Histogram prior needs c");
      DirichletPrior p;
      p.alpha.reserve(mle.weights.size());
      for (double w : mle.weights) p.alpha.push_back(1.0 + *schedule.c * w);
      return p;
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture: {
      const int S = static_cast<int>(mle.weights.size());
      double c, delta;
      std::optional<double> psi;
      if (family == Family::AdaptiveMixture) {
        const auto k = adaptive_constants(schedule, S);
        c = k.c;
        delta = k.delta;
        psi = k.psi;
      } else {
        if (!schedule.c || !schedule.delta) invalid("FiniteMixture prior needs c and delta");
        c = *schedule.c;
        delta = *schedule.delta;
      }
      if (!(delta > 0.0)) invalid("mixture prior box half-width must be positive");
      MixtureParamPrior p;
      p.family = family;
      for (double w : mle.weights) p.weights.alpha.push_back(1.0 + c * w);
      for (double mu : mle.locations) p.location_boxes.emplace_back(mu - delta, mu + delta);
      if (psi) {
        const double lo = std::max(mle.precision - *psi, 0.5 * mle.precision);
        p.precision_box = std::make_pair(lo, mle.precision + *psi);
      }
      return p;
    }
    case Family::SparseSequence: {
      const double g = check_gamma(gamma.value_or(schedule.gamma.value_or(0.1)));
      const auto* subset = std::get_if<Subset>(&mle.sieve);
      if (!subset) invalid("SparseSequence prior needs a Subset sieve");
      GaussianPrior p;
      p.family = family;
      p.sieve = mle.sieve;
      p.ambient = static_cast<int>(mle.theta.size());
      p.mean.resize(static_cast<Eigen::Index>(subset->indices.size()));
      for (std::size_t i = 0; i < subset->indices.size(); ++i)
        p.mean(static_cast<Eigen::Index>(i)) = mle.theta[static_cast<std::size_t>(subset->indices[i])];
      p.cov = CovarianceDescriptor::isotropic(1.0 / g);
      return p;
    }
    case Family::FixedDesignRegression: {
      const double g = check_gamma(gamma.value_or(schedule.gamma.value_or(0.1)));
      const int S = static_cast<int>(mle.theta.size());
      Eigen::MatrixXd gram;
      if (psi_matrix) {
        gram = *psi_matrix;
        if (gram.rows() != S || gram.cols() != S) invalid("psi_matrix must be S x S");
      } else {
        const auto phi = fourier_design(equispaced_design(schedule.n), S);
        gram = phi.transpose() * phi;
      }
      GaussianPrior p;
      p.family = family;
      p.sieve = TruncationOrder{S};
      p.ambient = S;
      p.mean = Eigen::Map<const Eigen::VectorXd>(mle.theta.data(), S);
      p.cov = CovarianceDescriptor::structured(1.0 / g, std::move(gram));
      return p;
    }
  }
  invalid("build_prior: unsupported family");
}

HierarchicalPrior build_hierarchical_prior(const ModelSpec& model, const Dataset& data,
                                           const Schedule& schedule, const WeightConstants& k,
                                           const std::optional<EmConfig>& em) {
  model.validate();
  validate_dataset(model, data);
  HierarchicalPrior h;
  h.constants = k;
  h.n = model.n;
  switch (model.family) {
    case Family::SparseSequence: {
      const double g = check_gamma(schedule.gamma.value_or(0.1));
      h.scheme = WeightScheme::SparseSubset;
      h.min_size = 0;
      h.max_size = model.n;
      auto x = std::make_shared<const std::vector<double>>(data.observations);
      const int n = model.n;
      h.conditional = [x, g, n](const SieveIndex& S) -> BasePrior {
        const auto& subset = std::get<Subset>(S);
        GaussianPrior p;
        p.family = Family::SparseSequence;
        p.sieve = S;
        p.ambient = n;
        p.mean.resize(static_cast<Eigen::Index>(subset.indices.size()));
        for (std::size_t i = 0; i < subset.indices.size(); ++i)
          p.mean(static_cast<Eigen::Index>(i)) = (*x)[static_cast<std::size_t>(subset.indices[i])];
        p.cov = CovarianceDescriptor::isotropic(1.0 / g);
        return p;
      };
      break;
    }
    case Family::FixedDesignRegression: {
      const double g = check_gamma(schedule.gamma.value_or(0.1));
      h.scheme = WeightScheme::TruncationOrder;
      h.min_size = 1;
      h.max_size = schedule.S_max.value_or(1);
      auto design = std::make_shared<const FourierDesign>(FourierDesign::make(model.n, h.max_size));
      auto fits = std::make_shared<const NestedFits>(nested_least_squares(*design, data.observations));
      h.conditional = [design, fits, g](const SieveIndex& S) -> BasePrior {
        const int order = std::get<TruncationOrder>(S).order;
        GaussianPrior p;
        p.family = Family::FixedDesignRegression;
        p.sieve = S;
        p.ambient = order;
        p.mean = fits->coefficients(order);
        p.cov = CovarianceDescriptor::structured(1.0 / g, design->gram.topLeftCorner(order, order));
        return p;
      };
      break;
    }
    case Family::AdaptiveMixture: {
      h.scheme = WeightScheme::AdaptiveMixture;
      h.min_size = 1;
      h.max_size = schedule.S_max.value_or(1);
      const EmConfig cfg = em.value_or(em_config_for(schedule, data.seed));
      auto priors = std::make_shared<std::vector<BasePrior>>();
      for (int S = 1; S <= h.max_size; ++S) {
        const auto fit = sieve_mle(model, Dimension{S}, data, cfg);
        const auto built = build_prior(model.family, fit.point, schedule);
        priors->push_back(std::get<MixtureParamPrior>(built));
      }
      h.conditional = [priors](const SieveIndex& S) -> BasePrior {
        return priors->at(static_cast<std::size_t>(std::get<Dimension>(S).size - 1));
      };
      break;
    }
    default:
      invalid("build_hierarchical_prior: family has no model-weight scheme");
  }
  h.size_log_probs = normalized_size_log_probs(h.scheme, h.n, h.min_size, h.max_size, k);
  return h;
}

// ---------------------------------------------------------------------------
// Sampling and densities

ParamPoint sample_base(const BasePrior& prior, Rng& rng) {
  return std::visit(
      Overloaded{[&](const GaussianPrior& p) { return gaussian_point(p, sample_gaussian(p, rng)); },
                 [&](const DirichletPrior& p) { return ParamPoint::histogram(sample_dirichlet(p.alpha, rng)); },
                 [&](const MixtureParamPrior& p) { return sample_mixture_param(p, rng); }},
      prior);
}

ParamPoint sample_prior(const EmpiricalPrior& prior, Rng& rng) {
  return std::visit(Overloaded{[&](const HierarchicalPrior& h) {
                                 const SieveIndex S = sample_index(h, rng);
                                 return sample_base(h.conditional(S), rng);
                               },
                               [&](const auto& base) { return sample_base(BasePrior(base), rng); }},
                    prior);
}

ParamPoint sample_prior(const EmpiricalPrior& prior, std::uint64_t seed) {
  Rng rng(seed);
  return sample_prior(prior, rng);
}

double log_base_density(const BasePrior& prior, const ParamPoint& theta) {
  return std::visit(Overloaded{[&](const GaussianPrior& p) {
                                 bool ok = true;
                                 const auto x = gaussian_coordinates(p, theta, ok);
                                 return ok ? log_gaussian_density(p, x) : kNegInf;
                               },
                               [&](const DirichletPrior& p) { return log_dirichlet_density(p.alpha, theta.weights); },
                               [&](const MixtureParamPrior& p) { return log_mixture_param_density(p, theta); }},
                    prior);
}

double log_prior_density(const EmpiricalPrior& prior, const ParamPoint& theta) {
  return std::visit(Overloaded{[&](const HierarchicalPrior& h) {
                                 const int size = sieve_size(theta.sieve);
                                 if (size < h.min_size || size > h.max_size) return kNegInf;
                                 return h.log_index_prob(theta.sieve) +
                                        log_base_density(h.conditional(theta.sieve), theta);
                               },
                               [&](const auto& base) { return log_base_density(BasePrior(base), theta); }},
                    prior);
}

}  // namespace ebrate
