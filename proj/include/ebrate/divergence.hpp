#pragma once

#include <cstdint>
#include <stdexcept>

#include "ebrate/model.hpp"

namespace ebrate {

// Hellinger convention: H^2(f, g) = 1 - integral sqrt(f g), so H^2 lies in [0, 1].

enum class DivMethod { ClosedForm, Quadrature, MonteCarlo };

struct DivergenceCfg {
  double tol = 1e-12;        // successive-refinement tolerance
  int initial_intervals = 256;
  int max_refinements = 14;  // doublings of the grid
  int mc_samples = 100000;
  std::uint64_t seed = 0;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Marginal H^2 for i.i.d. families, joint H^2 for SparseSequence and regression.
double hellinger_sq(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b, DivMethod method,
                    const DivergenceCfg& cfg = {});

/// 1 - (1 - h2)^n.
double joint_iid_hellinger_sq(double h2_marginal, int n);

/// log of the joint affinity integral sqrt(p_a^n p_b^n); closed form where available.
double joint_log_affinity(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b,
                          const DivergenceCfg& cfg = {});

struct KlV {
  double K = 0.0;
  double V = 0.0;
  bool support_mismatch = false;
};

/// Joint K(p_a^n, p_b^n) and V (uncentered second moment of the log ratio under p_a^n).
KlV kl_and_v(const ModelSpec& model, const ParamPoint& a, const ParamPoint& b, DivMethod method,
             const DivergenceCfg& cfg = {});

/// theta in A_{M eps}: H^2(p_star^n, p_theta^n) > 1 - exp(-M^2 n eps^2).
bool in_A_Meps(const ModelSpec& model, const ParamPoint& theta, const ParamPoint& theta_star, double M,
               double eps_n, const DivergenceCfg& cfg = {});

/// Same set when the joint log affinity is already known.
bool in_A_Meps_from_log_affinity(double joint_log_affinity, int n, double M, double eps_n);

/// Marginal H^2 between a histogram on [0,1] and a continuous linear density.
double hellinger_sq_histogram_linear(const std::vector<double>& weights, const LinearDensity& truth);

/// Affinity sum over bins of sqrt(w_s * S) * integral of sqrt(p) over bin s, given
/// precomputed bin root integrals.
double histogram_affinity(const std::vector<double>& weights, const std::vector<double>& root_integrals);
std::vector<double> linear_root_integrals(const LinearDensity& truth, int bins);

}  // namespace ebrate
