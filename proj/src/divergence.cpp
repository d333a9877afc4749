#include "ebrate/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "ebrate/numeric.hpp"
#include "ebrate/random.hpp"

namespace ebrate {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

struct Integrals {
  double half_sq_diff = 0.0;  // 1/2 * int (sqrt f - sqrt g)^2
  double kl = 0.0;            // int f log(f/g)
  double v = 0.0;             // int f log^2(f/g)
};

// ---- histogram pieces -------------------------------------------------------

struct Piece {
  double length;
  double fa;  // densities on the piece
  double fb;
};

std::vector<Piece> merged_pieces(const std::vector<double>& wa, const std::vector<double>& wb) {
  const auto Sa = static_cast<double>(wa.size());
  const auto Sb = static_cast<double>(wb.size());
  std::vector<double> cuts;
  for (std::size_t i = 0; i <= wa.size(); ++i) cuts.push_back(static_cast<double>(i) / Sa);
  for (std::size_t i = 0; i <= wb.size(); ++i) cuts.push_back(static_cast<double>(i) / Sb);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double len = cuts[i + 1] - cuts[i];
    if (len <= 1e-15) continue;
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    const auto ia = std::min(wa.size() - 1, static_cast<std::size_t>(mid * Sa));
    const auto ib = std::min(wb.size() - 1, static_cast<std::size_t>(mid * Sb));
    pieces.push_back({len, wa[ia] * Sa, wb[ib] * Sb});
  }
  return pieces;
}

Integrals histogram_integrals(const std::vector<double>& wa, const std::vector<double>& wb, bool& mismatch) {
  Integrals out;
  mismatch = false;
  for (const auto& p : merged_pieces(wa, wb)) {
    const double d = std::sqrt(p.fa) - std::sqrt(p.fb);
    out.half_sq_diff += 0.5 * d * d * p.length;
    if (p.fa > 0.0) {
      if (p.fb <= 0.0) {
        mismatch = true;
        continue;
      }
      const double lr = std::log(p.fa / p.fb);
      out.kl += p.fa * lr * p.length;
      out.v += p.fa * lr * lr * p.length;
    }
  }
  if (mismatch) {
    out.kl = std::numeric_limits<double>::infinity();
    out.v = std::numeric_limits<double>::infinity();
  }
  return out;
}

// ---- 1-D quadrature ---------------------------------------------------------

using LogDensity = std::function<double(double)>;

struct Window {
  bool tangent = false;  // x = center + scale * tan(u) on (-pi/2, pi/2)
  double lo = 0.0;
  double hi = 0.0;
  double center = 0.0;
  double scale = 1.0;
};

void accumulate_point(const LogDensity& la, const LogDensity& lb, double x, double jac, double weight,
                      Integrals& acc) {
  const double fa_log = la(x);
  const double fb_log = lb(x);
  const double sa = std::exp(0.5 * fa_log);
  const double sb = std::exp(0.5 * fb_log);
  const double d = sa - sb;
  acc.half_sq_diff += weight * jac * 0.5 * d * d;
  if (fa_log > kNegInf) {
    const double lr = fa_log - fb_log;
    const double fa = sa * sa;
    acc.kl += weight * jac * fa * lr;
    acc.v += weight * jac * fa * lr * lr;
  }
}

Integrals quadrature(const LogDensity& la, const LogDensity& lb, const Window& w, const DivergenceCfg& cfg) {
  const double lo = w.tangent ? -std::numbers::pi / 2 : w.lo;
  const double hi = w.tangent ? std::numbers::pi / 2 : w.hi;
  auto eval = [&](double u, double weight, Integrals& acc) {
    if (w.tangent) {
      const double c = std::cos(u);
      if (c <= 0.0) return;  // tails vanish at the endpoints for equal-scale Cauchy mixtures
      accumulate_point(la, lb, w.center + w.scale * std::tan(u), w.scale / (c * c), weight, acc);
    } else {
      accumulate_point(la, lb, u, 1.0, weight, acc);
    }
  };

  int intervals = cfg.initial_intervals;
  double h = (hi - lo) / intervals;
  Integrals sum;  // unscaled trapezoid sums
  if (!w.tangent) {
    eval(lo, 0.5, sum);
    eval(hi, 0.5, sum);
  }
  for (int i = 1; i < intervals; ++i) eval(lo + i * h, 1.0, sum);
  Integrals est{sum.half_sq_diff * h, sum.kl * h, sum.v * h};

  for (int r = 0; r < cfg.max_refinements; ++r) {
    for (int i = 0; i < intervals; ++i) eval(lo + (i + 0.5) * h, 1.0, sum);
    intervals *= 2;
    h *= 0.5;
    const Integrals next{sum.half_sq_diff * h, sum.kl * h, sum.v * h};
    const bool done = std::abs(next.half_sq_diff - est.half_sq_diff) <= cfg.tol &&
                      std::abs(next.kl - est.kl) <= cfg.tol * std::max(1.0, std::abs(next.kl)) &&
                      std::abs(next.v - est.v) <= cfg.tol * std::max(1.0, std::abs(next.v));
    est = next;
    if (done && r >= 1) return est;
  }
  throw QuadratureError("quadrature did not converge within " + std::to_string(cfg.max_refinements) +
                        " grid refinements");
}

double kernel_log_pdf(Kernel kernel, double x, double mu, double scale) {
  if (kernel == Kernel::Normal) return log_normal_pdf(x, mu, scale);
  const double z = (x - mu) / scale;
  return -std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

double component_scale(const ModelSpec& model, const ParamPoint& p) {
  return model.family == Family::AdaptiveMixture ? 1.0 / std::sqrt(p.precision) : model.sigma;
}

LogDensity mixture_log_density(const ModelSpec& model, const ParamPoint& p) {
  const Kernel kernel = *model.kernel;
  const double scale = component_scale(model, p);
  return [kernel, scale, w = p.weights, mu = p.locations](double x) {
    double terms[64];
    std::vector<double> big;
    double* t = terms;
    if (w.size() > 64) {
      big.resize(w.size());
      t = big.data();
    }
    for (std::size_t s = 0; s < w.size(); ++s)
      t[s] = w[s] > 0.0 ? std::log(w[s]) + kernel_log_pdf(kernel, x, mu[s], scale) : kNegInf;
    return log_sum_exp(std::span<const double>(t, w.size()));
  };
}

Integrals mixture_integrals(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b,
                            const DivergenceCfg& cfg) {
  validate_point(model, a);
  validate_point(model, b);
  Window w;
  double mlo = std::numeric_limits<double>::infinity(), mhi = -mlo;
  for (double m : a.locations) mlo = std::min(mlo, m), mhi = std::max(mhi, m);
  for (double m : b.locations) mlo = std::min(mlo, m), mhi = std::max(mhi, m);
  const double sd = std::max(component_scale(model, a), component_scale(model, b));
  if (*model.kernel == Kernel::Cauchy) {
    w.tangent = true;
    w.center = 0.5 * (mlo + mhi);
    w.scale = model.sigma;
  } else {
    w.lo = mlo - 10.0 * sd;
    w.hi = mhi + 10.0 * sd;
  }
  return quadrature(mixture_log_density(model, a), mixture_log_density(model, b), w, cfg);
}

Integrals gaussian_quadrature(double ma, double mb, double sigma, const DivergenceCfg& cfg) {
  Window w;
  w.lo = std::min(ma, mb) - 10.0 * sigma;
  w.hi = std::max(ma, mb) + 10.0 * sigma;
  return quadrature([=](double x) { return log_normal_pdf(x, ma, sigma); },
                    [=](double x) { return log_normal_pdf(x, mb, sigma); }, w, cfg);
}

/// Coordinatewise mean differences for the joint Gaussian families.
std::vector<double> joint_means(const ModelSpec& model, const ParamPoint& p) {
  if (model.family == Family::SparseSequence) {
    if (p.theta.size() != static_cast<std::size_t>(model.n)) invalid("sparse point must have length n");
    return p.theta;
  }
  return regression_function(p.theta, equispaced_design(model.n));
}

double joint_sq_distance(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b) {
  const auto fa = joint_means(model, a);
  const auto fb = joint_means(model, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) acc += (fa[i] - fb[i]) * (fa[i] - fb[i]);
  return acc / (model.sigma * model.sigma);
}

// ---- Monte Carlo ------------------------------------------------------------

double log_marginal_density(const ModelSpec& model, const ParamPoint& p, double x) {
  switch (model.family) {
    case Family::GaussianLocation: return log_normal_pdf(x, p.theta[0], model.sigma);
    case Family::Histogram: {
      if (x < 0.0 || x > 1.0) return kNegInf;
      const auto S = p.weights.size();
      const auto s = std::min(S - 1, static_cast<std::size_t>(x * static_cast<double>(S)));
      return p.weights[s] > 0.0 ? std::log(p.weights[s] * static_cast<double>(S)) : kNegInf;
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture: return mixture_log_density(model, p)(x);
    default: invalid("log_marginal_density: i.i.d. family required");
  }
}

struct McStats {
  double affinity = 0.0;
  double kl = 0.0;
  double v = 0.0;
};

McStats monte_carlo(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b, const DivergenceCfg& cfg) {
  if (cfg.mc_samples < 1) invalid("mc_samples must be positive");
  McStats out;
  if (is_iid(model.family)) {
    ModelSpec draw_model = model;
    draw_model.n = cfg.mc_samples;
    const auto data = simulate(draw_model, a, cfg.seed);
    for (double x : data.observations) {
      const double lr = log_marginal_density(model, b, x) - log_marginal_density(model, a, x);
      out.affinity += std::exp(0.5 * lr);
      out.kl += -lr;
      out.v += lr * lr;
    }
  } else {
    for (int r = 0; r < cfg.mc_samples; ++r) {
      const auto data = simulate(model, a, derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
      const double lr = log_likelihood(model, b, data) - log_likelihood(model, a, data);
      out.affinity += std::exp(0.5 * lr);
      out.kl += -lr;
      out.v += lr * lr;
    }
  }
  const double m = cfg.mc_samples;
  out.affinity /= m;
  out.kl /= m;
  out.v /= m;
  return out;
}

void check_same_family(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b) {
  model.validate();
  if (model.family == Family::FixedDesignRegression) {
    if (a.theta.empty() || b.theta.empty()) invalid("regression points need coefficients");
    return;
  }
  validate_point(model, a);
  validate_point(model, b);
}

}  // namespace

// ---------------------------------------------------------------------------

double joint_iid_hellinger_sq(double h2_marginal, int n) {
  if (!(h2_marginal >= 0.0 && h2_marginal <= 1.0)) invalid("joint_iid_hellinger_sq: h2 must lie in [0, 1]");
  if (n < 1) invalid("joint_iid_hellinger_sq: n must be positive");
  if (n == 1) return h2_marginal;
  return -std::expm1(n * std::log1p(-h2_marginal));
}

double hellinger_sq(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b, DivMethod method,
                    const DivergenceCfg& cfg) {
  check_same_family(model, a, b);
  if (method == DivMethod::MonteCarlo) {
    const auto mc = monte_carlo(model, a, b, cfg);
    return std::clamp(1.0 - mc.affinity, 0.0, 1.0);
  }
  switch (model.family) {
    case Family::GaussianLocation: {
      if (method == DivMethod::Quadrature)
        return std::clamp(gaussian_quadrature(a.theta[0], b.theta[0], model.sigma, cfg).half_sq_diff, 0.0, 1.0);
      const double d = a.theta[0] - b.theta[0];
      return -std::expm1(-d * d / (8.0 * model.sigma * model.sigma));
    }
    case Family::Histogram: {
      bool mismatch = false;
      return std::clamp(histogram_integrals(a.weights, b.weights, mismatch).half_sq_diff, 0.0, 1.0);
    }
    case Family::SparseSequence:
    case Family::FixedDesignRegression: {
      if (method == DivMethod::Quadrature) {
        const auto fa = joint_means(model, a);
        const auto fb = joint_means(model, b);
        double log_aff = 0.0;
        for (std::size_t i = 0; i < fa.size(); ++i)
          log_aff += std::log1p(-gaussian_quadrature(fa[i], fb[i], model.sigma, cfg).half_sq_diff);
        return -std::expm1(log_aff);
      }
      return -std::expm1(-joint_sq_distance(model, a, b) / 8.0);
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture:
      if (method == DivMethod::ClosedForm) invalid("hellinger_sq: no closed form for mixtures; use Quadrature");
      return std::clamp(mixture_integrals(model, a, b, cfg).half_sq_diff, 0.0, 1.0);
  }
  return 0.0;
}

double joint_log_affinity(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b,
                          const DivergenceCfg& cfg) {
  check_same_family(model, a, b);
  switch (model.family) {
    case Family::GaussianLocation: {
      const double d = a.theta[0] - b.theta[0];
      return -model.n * d * d / (8.0 * model.sigma * model.sigma);
    }
    case Family::SparseSequence:
    case Family::FixedDesignRegression: return -joint_sq_distance(model, a, b) / 8.0;
    case Family::Histogram: {
      bool mismatch = false;
      return model.n * std::log1p(-histogram_integrals(a.weights, b.weights, mismatch).half_sq_diff);
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture:
      return model.n * std::log1p(-mixture_integrals(model, a, b, cfg).half_sq_diff);
  }
  return 0.0;
}

KlV kl_and_v(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b, DivMethod method,
             const DivergenceCfg& cfg) {
  check_same_family(model, a, b);
  const double n = model.n;
  auto joint_from_marginal = [n](double k1, double v1, bool mismatch) {
    KlV out;
    out.support_mismatch = mismatch;
    if (mismatch) {
      out.K = out.V = std::numeric_limits<double>::infinity();
      return out;
    }
    out.K = n * k1;
    out.V = n * v1 + n * (n - 1.0) * k1 * k1;
    return out;
  };

  if (method == DivMethod::MonteCarlo) {
    const auto mc = monte_carlo(model, a, b, cfg);
    if (is_iid(model.family)) return joint_from_marginal(mc.kl, mc.v, !std::isfinite(mc.kl));
    return {mc.kl, mc.v, !std::isfinite(mc.kl)};
  }

  switch (model.family) {
    case Family::GaussianLocation: {
      if (method == DivMethod::Quadrature) {
        const auto q = gaussian_quadrature(a.theta[0], b.theta[0], model.sigma, cfg);
        return joint_from_marginal(q.kl, q.v, false);
      }
      const double d2 = (a.theta[0] - b.theta[0]) * (a.theta[0] - b.theta[0]) / (model.sigma * model.sigma);
      const double k1 = 0.5 * d2;
      return joint_from_marginal(k1, k1 * k1 + d2, false);
    }
    case Family::Histogram: {
      bool mismatch = false;
      const auto h = histogram_integrals(a.weights, b.weights, mismatch);
      return joint_from_marginal(h.kl, h.v, mismatch);
    }
    case Family::SparseSequence:
    case Family::FixedDesignRegression: {
      if (method == DivMethod::Quadrature) {
        const auto fa = joint_means(model, a);
        const auto fb = joint_means(model, b);
        double K = 0.0, var = 0.0;
        for (std::size_t i = 0; i < fa.size(); ++i) {
          const auto q = gaussian_quadrature(fa[i], fb[i], model.sigma, cfg);
          K += q.kl;
          var += q.v - q.kl * q.kl;
        }
        return {K, var + K * K, false};
      }
      const double d2 = joint_sq_distance(model, a, b);
      const double K = 0.5 * d2;
      return {K, K * K + d2, false};
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture: {
      if (method == DivMethod::ClosedForm) invalid("kl_and_v: no closed form for mixtures; use Quadrature");
      const auto q = mixture_integrals(model, a, b, cfg);
      return joint_from_marginal(q.kl, q.v, false);
    }
  }
  return {};
}

bool in_A_Meps_from_log_affinity(double joint_log_affinity, int n, double M, double eps_n) {
  if (!(M > 0.0)) invalid("in_A_Meps: M must be positive");
  return -joint_log_affinity > M * M * n * eps_n * eps_n;
}

bool in_A_Meps(const ModelSpec& model, const ParamPoint& theta, const ParamPoint& theta_star, double M,
               double eps_n, const DivergenceCfg& cfg) {
  if (!(M > 0.0)) invalid("in_A_Meps: M must be positive");
  return in_A_Meps_from_log_affinity(joint_log_affinity(model, theta_star, theta, cfg), model.n, M, eps_n);
}

std::vector<double> linear_root_integrals(const LinearDensity& truth, int bins) {
  std::vector<double> out(static_cast<std::size_t>(bins));
  for (int s = 0; s < bins; ++s)
    out[static_cast<std::size_t>(s)] =
        truth.root_integral(static_cast<double>(s) / bins, static_cast<double>(s + 1) / bins);
  return out;
}

double histogram_affinity(const std::vector<double>& weights, const std::vector<double>& root_integrals) {
  const auto S = static_cast<double>(weights.size());
  double acc = 0.0;
  for (std::size_t s = 0; s < weights.size(); ++s) acc += std::sqrt(weights[s] * S) * root_integrals[s];
  return acc;
}

double hellinger_sq_histogram_linear(const std::vector<double>& weights, const LinearDensity& truth) {
  const auto roots = linear_root_integrals(truth, static_cast<int>(weights.size()));
  return std::clamp(1.0 - histogram_affinity(weights, roots), 0.0, 1.0);
}

}  // namespace ebrate
