#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "ebrate/model.hpp"

namespace ebrate {

struct EmConfig {
  int max_iters = 500;
  double tol = 1e-8;  // stop once the log-likelihood gain drops below this
  int restarts = 5;
  double location_bound = 10.0;  // |mu_s| <= B
  double precision_lo = 1e-3;    // B_l
  double precision_hi = 1e3;     // B_u
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const EmConfig&) const = default;
};

inline constexpr double kWeightFloor = 1e-12;

struct SieveFit {
  ParamPoint point;
  double log_likelihood = 0.0;
  bool converged = true;       // false if EM hit max_iters on the kept restart
  int iterations = 0;
  int floored_components = 0;  // weights raised to kWeightFloor in the last step
  int best_restart = 0;
};

class SingularDesignError : public std::runtime_error {
 public:
  SingularDesignError(int order, const std::string& what)
      : std::runtime_error(what), order_(order) {}
  int order() const { return order_; }

 private:
  int order_;
};

/// Maximizer of the likelihood over the sieve set. `em` is required for mixtures.
SieveFit sieve_mle(const ModelSpec& model, const SieveIndex& sieve, const Dataset& data,
                   const std::optional<EmConfig>& em = std::nullopt);

/// One constrained EM (ECM for the Cauchy kernel) update. Weights below
/// kWeightFloor are floored and the count is written to `floored`.
ParamPoint em_step(const ModelSpec& model, const ParamPoint& theta, const Dataset& data,
                   const EmConfig& em, int* floored = nullptr);

/// Least-squares coefficients via column-pivoted QR.
/// Throws SingularDesignError when phi does not have full column rank.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y);

/// Regression sieve MLE for TruncationOrder(order).
std::vector<double> regression_mle(const std::vector<double>& design,
                                   const std::vector<double>& y, int order);

/// Fourier design at t_i = i/n with the Cholesky factor of its Gram matrix,
/// shared by every truncation order up to `columns`.
struct FourierDesign {
  int n = 0;
  int columns = 0;
  std::vector<double> t;
  Eigen::MatrixXd phi;
  Eigen::MatrixXd gram;
  Eigen::MatrixXd chol;  // lower, gram = chol * chol^T

  static FourierDesign make(int n, int columns);
};

/// Least-squares fits of every leading truncation order at once.
struct NestedFits {
  Eigen::VectorXd z;  // chol^{-1} phi^T y
  double yy = 0.0;    // |y|^2
  const FourierDesign* design = nullptr;

  Eigen::VectorXd coefficients(int order) const;
  double rss(int order) const;
};
NestedFits nested_least_squares(const FourierDesign& design, const std::vector<double>& y);

}  // namespace ebrate
