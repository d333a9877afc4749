#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ebrate/model.hpp"
#include "ebrate/random.hpp"
#include "ebrate/sieve_mle.hpp"

namespace ebrate {

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

struct ScheduleOptions {
  std::optional<double> beta;
  std::optional<double> b;        // AdaptiveMixture, > 2
  std::optional<double> gamma;    // SparseSequence / regression prior precision, in (0,1)
  std::optional<double> B;        // g(s) = B for sparse/regression; location bound scale for mixtures
  std::optional<int> s_star;      // SparseSequence: sparsity driving the target rate
  std::optional<int> S_max;
  double sigma = 1.0;
  double C = 0.6931471805599453;  // toy LP1 constant, default log 2
  double d = kDefaultNeighborhoodD;
};

struct Schedule {
  Family family = Family::GaussianLocation;
  int n = 0;
  std::optional<double> beta;
  double epsilon_n = 0.0;
  int S = 1;
  std::optional<double> c;
  std::optional<double> delta;
  std::optional<double> B;
  std::optional<double> psi;
  std::optional<double> B_l;
  std::optional<double> B_u;
  std::optional<double> gamma;
  // family extras
  std::optional<double> kappa;
  std::optional<double> C;
  std::optional<double> D;
  std::optional<double> r;
  std::optional<double> b;
  std::optional<int> S_max;
  std::optional<int> s_star;
  double sigma = 1.0;
  bool per_S = false;  // c, delta, psi depend on S (AdaptiveMixture)

  double n_eps2() const { return n * epsilon_n * epsilon_n; }
  void validate() const;
  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& j);
  bool operator==(const Schedule&) const = default;
};

Schedule compute_schedule(Family family, int n, const ScheduleOptions& opts);
Schedule compute_schedule(Family family, int n, std::optional<double> beta = std::nullopt,
                          std::optional<double> b = std::nullopt);

/// Per-S constants of the adaptive mixture prior.
struct ComponentConstants {
  double c = 0.0;
  double delta = 0.0;
  double psi = 0.0;
};
ComponentConstants adaptive_constants(const Schedule& schedule, int S);

/// Prior sd making the toy LP1 mass exactly exp(-C).
double toy_prior_sd(double C, int n);

// ---------------------------------------------------------------------------
// Prior objects
// ---------------------------------------------------------------------------

/// Covariance scale * P^{-1}, with P = I when no structure is given.
struct CovarianceDescriptor {
  double scale = 1.0;
  std::optional<Eigen::MatrixXd> precision;
  Eigen::MatrixXd chol;  // lower Cholesky factor of P (empty for identity)
  double log_det_precision = 0.0;

  static CovarianceDescriptor isotropic(double scale);
  static CovarianceDescriptor structured(double scale, Eigen::MatrixXd precision);
  Eigen::MatrixXd covariance(int dim) const;
};

struct GaussianPrior {
  Family family = Family::GaussianLocation;
  SieveIndex sieve = Dimension{1};
  int ambient = 1;  // length of the full parameter vector (n for sparse)
  Eigen::VectorXd mean;
  CovarianceDescriptor cov;
};

struct DirichletPrior {
  std::vector<double> alpha;
};

struct MixtureParamPrior {
  Family family = Family::FiniteMixture;
  DirichletPrior weights;
  std::vector<std::pair<double, double>> location_boxes;
  std::optional<std::pair<double, double>> precision_box;
};

using BasePrior = std::variant<GaussianPrior, DirichletPrior, MixtureParamPrior>;

enum class WeightScheme { SparseSubset, TruncationOrder, AdaptiveMixture };

struct WeightConstants {
  double B = 1.0;  // g(s) = B
  double D = 1.0;
  double r = 1.5;
  bool operator==(const WeightConstants&) const = default;
};

double log_model_weight(WeightScheme scheme, const SieveIndex& S, int n, const WeightConstants& k);
double model_weight(WeightScheme scheme, const SieveIndex& S, int n, const WeightConstants& k);

struct HierarchicalPrior {
  WeightScheme scheme = WeightScheme::TruncationOrder;
  WeightConstants constants;
  int n = 1;
  int min_size = 1;
  int max_size = 1;
  /// Normalized log probability of each size min_size..max_size. For subsets this is
  /// the total mass of all subsets of that size.
  std::vector<double> size_log_probs;
  std::function<BasePrior(const SieveIndex&)> conditional;

  double log_size_prob(int size) const;
  /// Normalized log w_n(S) of one index.
  double log_index_prob(const SieveIndex& S) const;
};

using EmpiricalPrior = std::variant<GaussianPrior, DirichletPrior, MixtureParamPrior, HierarchicalPrior>;

/// Single-sieve prior centered on `mle`.
EmpiricalPrior build_prior(Family family, const ParamPoint& mle, const Schedule& schedule,
                           std::optional<double> gamma = std::nullopt,
                           const std::optional<Eigen::MatrixXd>& psi_matrix = std::nullopt);

/// Mixture-over-models prior. Fits the per-index sieve MLEs it needs.
HierarchicalPrior build_hierarchical_prior(const ModelSpec& model, const Dataset& data,
                                           const Schedule& schedule, const WeightConstants& k,
                                           const std::optional<EmConfig>& em = std::nullopt);

/// EM settings implied by a mixture schedule.
EmConfig em_config_for(const Schedule& schedule, std::uint64_t seed);

ParamPoint sample_prior(const EmpiricalPrior& prior, std::uint64_t seed);
ParamPoint sample_prior(const EmpiricalPrior& prior, Rng& rng);
ParamPoint sample_base(const BasePrior& prior, Rng& rng);

/// Density against Lebesgue on free coordinates times counting on indices.
/// Returns -infinity outside the support.
double log_prior_density(const EmpiricalPrior& prior, const ParamPoint& theta);
double log_base_density(const BasePrior& prior, const ParamPoint& theta);

double log_dirichlet_density(const std::vector<double>& alpha, const std::vector<double>& x);
std::vector<double> sample_dirichlet(const std::vector<double>& alpha, Rng& rng);

}  // namespace ebrate
