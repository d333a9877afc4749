#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ebrate/model.hpp"
#include "ebrate/prior.hpp"
#include "ebrate/random.hpp"
#include "ebrate/sieve_mle.hpp"

namespace ebrate {

/// alpha = (1 - 1/p) / 2, so that alpha * q = 1/2 with q = p/(p-1).
double alpha_from_p(double p);

struct FractionCfg {
  double p = 2.0;
  double alpha = 0.25;

  static FractionCfg from_p(double p);
  /// Full likelihood (alpha = 1), used where no fraction is taken.
  static FractionCfg full();
  bool operator==(const FractionCfg&) const = default;
};

struct ExactGaussian {
  Family family = Family::GaussianLocation;
  SieveIndex sieve = Dimension{1};
  int ambient = 1;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd cov_chol;  // lower

  static ExactGaussian make(Family family, SieveIndex sieve, int ambient, Eigen::VectorXd mean,
                            Eigen::MatrixXd covariance);
};

struct ExactDirichlet {
  std::vector<double> alpha;
};

struct RegressionPosteriorState;

struct IndexEnumeration {
  std::vector<SieveIndex> indices;
  std::vector<double> log_weights;  // normalized
  std::function<ExactGaussian(std::size_t)> conditional;
  std::shared_ptr<const RegressionPosteriorState> regression;
};

struct SamplerDiagnostics {
  double acceptance_rate = 1.0;
  int sweeps = 0;
  int burn_in = 0;
  std::vector<double> log_lik_trace;
  std::vector<double> inclusion_prob;  // Gibbs, Rao-Blackwellized
  std::vector<double> inclusion_se;    // batch means
};

struct SampleBag {
  std::vector<ParamPoint> draws;
  std::uint64_t seed = 0;
  SamplerDiagnostics diagnostics;
};

using PosteriorRep = std::variant<ExactGaussian, ExactDirichlet, IndexEnumeration, SampleBag>;

class ZeroAcceptanceError : public std::runtime_error {
 public:
  ZeroAcceptanceError(const std::string& what, SamplerDiagnostics diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const SamplerDiagnostics& diagnostics() const { return diagnostics_; }

 private:
  SamplerDiagnostics diagnostics_;
};

// ---------------------------------------------------------------------------

ExactGaussian posterior_gaussian_location(const GaussianPrior& prior, const ModelSpec& model,
                                          const Dataset& data, double alpha);

ExactDirichlet posterior_histogram(const DirichletPrior& prior, const std::vector<int>& counts,
                                   double alpha = 1.0);

enum class SparseMode { ExactEnumeration, Gibbs };

struct SparseSamplerCfg {
  SparseMode mode = SparseMode::Gibbs;
  std::uint64_t seed = 0;
  int sweeps = 2000;
  int burn_in = -1;      // default sweeps / 10
  int max_draws = 1000;  // stored draws, thinned evenly
};

inline constexpr int kMaxEnumerationN = 15;

PosteriorRep posterior_sparse_mean(const Dataset& data, const WeightConstants& weights, double gamma,
                                   double alpha, const SparseSamplerCfg& cfg);

/// Marginal inclusion probabilities of a subset enumeration.
std::vector<double> inclusion_probabilities(const IndexEnumeration& post, int n);

struct RegressionPosteriorState {
  std::shared_ptr<const FourierDesign> design;
  NestedFits fits;
  double shrink = 1.0;  // alpha / sigma^2 + gamma
  double sigma = 1.0;

  /// chol^T theta for a draw of order S, padded with zeros to the design width.
  Eigen::VectorXd whitened_draw(int order, Rng& rng) const;
  std::vector<double> coefficient_draw(int order, Rng& rng) const;
};

IndexEnumeration posterior_regression(const Dataset& data, const WeightConstants& weights, double gamma,
                                      double alpha, int S_max, double sigma = 1.0);
IndexEnumeration posterior_regression(const Dataset& data, std::shared_ptr<const FourierDesign> design,
                                      const WeightConstants& weights, double gamma, double alpha,
                                      int S_max, double sigma = 1.0);

/// Log acceptance ratio of an independence sampler with proposal density q.
double independence_mh_log_ratio(double alpha, double ll_cur, double ll_prop, double log_prior_cur,
                                 double log_prior_prop, double log_q_cur, double log_q_prop);

/// Independence Metropolis-Hastings with the empirical prior as proposal.
/// `prior` must hold a MixtureParamPrior or a HierarchicalPrior over mixtures.
SampleBag posterior_mixture_mh(const ModelSpec& model, const Dataset& data, const EmpiricalPrior& prior,
                               double alpha, std::uint64_t seed, int draws, int burn_in);

/// Draws from any representation. SampleBag draws are returned as stored.
std::vector<ParamPoint> posterior_draws(const PosteriorRep& post, int count, std::uint64_t seed);
ParamPoint sample_exact_gaussian(const ExactGaussian& g, Rng& rng);
std::size_t sample_index(const std::vector<double>& log_weights, Rng& rng);

void write_sample_bag(const SampleBag& bag, const std::filesystem::path& path);
SampleBag read_sample_bag(const std::filesystem::path& path);

}  // namespace ebrate
