#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "ebrate/model.hpp"
#include "ebrate/prior.hpp"

namespace ebrate {

struct Estimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

inline constexpr int kMinProbeDraws = 10000;

/// Prior mass of the likelihood-ratio neighborhood of `mle`, by direct sampling.
Estimate lp1_mass(const EmpiricalPrior& prior, const ModelSpec& model, const Dataset& data,
                  const ParamPoint& mle, double d, double budget, int draws, std::uint64_t seed);

struct Gp1GridCfg {
  int points = 4001;
  double width_multiplier = 14.0;
  std::optional<double> half_width;  // overrides the automatic width
  double edge_fraction = 0.01;       // outer share of the grid checked for truncation
  double truncation_limit = 1e-6;
};

struct Gp1Result {
  double value = 0.0;
  double edge_mass = 0.0;  // relative mass in the outer edge_fraction of the grid
  bool truncated = false;
};

using GaussianPriorBuilder = std::function<GaussianPrior(const Dataset&)>;

/// Integral over theta of [E pi_n(theta)^p]^{1/p}: grid over theta, Monte Carlo over data.
Gp1Result gp1_integral_1d(const GaussianPriorBuilder& builder, const ModelSpec& model,
                          const ParamPoint& theta_star, double p, const Gp1GridCfg& grid, int replicates,
                          std::uint64_t seed);

/// Exact value of the integral for a N(xbar, s^2) prior in the N(theta, sigma^2) model.
double gp1_toy_exact(double s, int n, double p, double sigma = 1.0);
/// The proportional expression s^{-(p-1)/p} (s^2 + p/n)^{1/2} / (s^2/p + 1/n)^{1/(2p)}.
double gp1_toy_expression(double s, int n, double p);
/// Constant c(p) with gp1_toy_expression = c(p) * gp1_toy_exact (sigma = 1).
double gp1_toy_constant(double p);
/// |I + p Psi Sigma^{-1}|^{1/2 - 1/(2p)} for a N(mle, (n Psi)^{-1}) prior; `fisher` is Sigma.
double gp1_determinant_form(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& fisher, double p);

/// log prod_{j=1}^n (1 + (S + j)/c).
double log_gamma_ratio_product(double c, int S, int n);
/// True iff the product is at most exp(d * n_eps2).
bool gamma_ratio_check(double c, int S, int n, double d, double n_eps2);

/// (E - a)/(1 - a), floored at 0.
double reverse_markov_bound(double expectation, double a);

/// Lower bound on the Dirichlet prior mass of the neighborhood for the histogram family:
/// reverse Markov applied to E[L(theta)/L(mle)] >= Gamma(c+S) c^n / Gamma(c+S+n).
double histogram_lp1_bound(double c, int S, int n, double d, double n_eps2);

struct Lp2Result {
  double weight_part = 0.0;
  double weight_se = 0.0;
  double mass_part = 0.0;
  double mass_se = 0.0;
};

/// Normalized w_n(S*) and the conditional prior mass of the per-model neighborhood
/// {L(theta) >= exp(-d |S*|) L(mle_S*)}.
Lp2Result lp2_mass(const HierarchicalPrior& prior, const ModelSpec& model, const Dataset& data,
                   const SieveIndex& S_star, double d, int draws, std::uint64_t seed);

/// Lower bound gamma^{k/2} e^{-gamma d k} (d k)^{k/2} / Gamma(k/2 + 1) on the N(0, I/gamma)
/// mass of the ball |z|^2 < 2 d k.
double sparse_ball_bound(double gamma, int k, double d);
/// Exact mass of that ball.
double sparse_ball_mass(double gamma, int k, double d);

struct ProbeReport {
  std::string condition;
  Family family = Family::GaussianLocation;
  int n = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::optional<double> bound;
  bool pass = false;
  std::optional<double> implied_constant;  // -log(estimate) / (n eps^2)

  nlohmann::json to_json() const;
};

double implied_constant(double estimate, double n_eps2);

}  // namespace ebrate
