#include "ebrate/sieve_mle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <string>

#include "ebrate/log.hpp"
#include "ebrate/numeric.hpp"
#include "ebrate/random.hpp"

namespace ebrate {

void EmConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("EmConfig: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("EmConfig: tol must be > 0");
  if (restarts < 1) throw std::invalid_argument("EmConfig: restarts must be >= 1");
  if (!(location_bound > 0.0)) throw std::invalid_argument("EmConfig: location_bound must be > 0");
  if (!(precision_lo > 0.0) || !(precision_lo < precision_hi))
    throw std::invalid_argument("EmConfig: need 0 < precision_lo < precision_hi");
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y) {
  if (phi.rows() != y.size()) throw std::invalid_argument("least_squares: row mismatch");
  const auto cols = static_cast<int>(phi.cols());
  if (phi.rows() < phi.cols())
    throw SingularDesignError(cols, "least_squares: normal matrix singular for S = " +
                                        std::to_string(cols) + " (more columns than rows)");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  qr.setThreshold(1e-10);
  if (qr.rank() < phi.cols())
    throw SingularDesignError(cols, "least_squares: normal matrix singular for S = " +
                                        std::to_string(cols) + " (rank " +
                                        std::to_string(qr.rank()) + ")");
  return qr.solve(y);
}

std::vector<double> regression_mle(const std::vector<double>& design, const std::vector<double>& y,
                                   int order) {
  const Eigen::MatrixXd phi = fourier_design(design, order);
  const Eigen::VectorXd coef =
      least_squares(phi, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
  return {coef.data(), coef.data() + coef.size()};
}

FourierDesign FourierDesign::make(int n, int columns) {
  if (columns < 1 || columns > n)
    throw SingularDesignError(columns, "FourierDesign: truncation order " + std::to_string(columns) +
                                           " not in 1..n");
  FourierDesign d;
  d.n = n;
  d.columns = columns;
  d.t = equispaced_design(n);
  d.phi = fourier_design(d.t, columns);
  d.gram = d.phi.transpose() * d.phi;
  Eigen::LLT<Eigen::MatrixXd> llt(d.gram);
  if (llt.info() != Eigen::Success)
    throw SingularDesignError(columns, "FourierDesign: normal matrix singular for S <= " +
                                           std::to_string(columns));
  d.chol = llt.matrixL();
  for (int j = 0; j < columns; ++j)
    if (!(d.chol(j, j) > 1e-8 * std::sqrt(static_cast<double>(n))))
      throw SingularDesignError(j + 1, "FourierDesign: normal matrix singular for S = " +
                                           std::to_string(j + 1));
  return d;
}

NestedFits nested_least_squares(const FourierDesign& design, const std::vector<double>& y) {
  if (y.size() != static_cast<std::size_t>(design.n))
    throw std::invalid_argument("nested_least_squares: response length mismatch");
  const Eigen::Map<const Eigen::VectorXd> Y(y.data(), design.n);
  NestedFits fit;
  fit.design = &design;
  fit.z = design.chol.triangularView<Eigen::Lower>().solve(design.phi.transpose() * Y);
  fit.yy = Y.squaredNorm();
  return fit;
}

Eigen::VectorXd NestedFits::coefficients(int order) const {
  if (order < 1 || order > design->columns)
    throw std::invalid_argument("NestedFits: order out of range");
  const auto L = design->chol.topLeftCorner(order, order);
  return L.transpose().triangularView<Eigen::Upper>().solve(z.head(order));
}

double NestedFits::rss(int order) const {
  return std::max(0.0, yy - z.head(order).squaredNorm());
}

namespace {

double kernel_log_pdf(Kernel kernel, double x, double mu, double scale) {
  if (kernel == Kernel::Normal) return log_normal_pdf(x, mu, scale);
  const double z = (x - mu) / scale;
  return -std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

double mixture_scale(const ModelSpec& model, const ParamPoint& theta) {
  return model.family == Family::AdaptiveMixture ? 1.0 / std::sqrt(theta.precision) : model.sigma;
}

ParamPoint initial_point(const ModelSpec& model, int S, const Dataset& data, const EmConfig& em,
                         int restart) {
  std::vector<double> x = data.observations;
  std::sort(x.begin(), x.end());
  const auto n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var = std::max(var / static_cast<double>(n), 1e-12);

  Rng rng(derive_seed(em.seed, 0x454d, static_cast<std::uint64_t>(restart)));
  std::normal_distribution<double> jitter(0.0, 0.25 * std::sqrt(var));
  std::vector<double> mu(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    const double q = (s + 0.5) / S;
    const auto idx = std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)));
    double m = x[idx];
    if (restart > 0) m += jitter(rng);
    mu[static_cast<std::size_t>(s)] = std::clamp(m, -em.location_bound, em.location_bound);
  }
  std::vector<double> w(static_cast<std::size_t>(S), 1.0 / S);
  if (model.family == Family::AdaptiveMixture) {
    const double lambda =
        std::clamp(static_cast<double>(S) * S / var, em.precision_lo, em.precision_hi);
    return ParamPoint::adaptive_mixture(std::move(w), std::move(mu), lambda);
  }
  return ParamPoint::mixture(std::move(w), std::move(mu));
}

}  // namespace

ParamPoint em_step(const ModelSpec& model, const ParamPoint& theta, const Dataset& data,
                   const EmConfig& em, int* floored) {
  if (!is_mixture(model.family)) throw std::invalid_argument("em_step: mixture families only");
  const Kernel kernel = *model.kernel;
  const auto S = theta.weights.size();
  const auto& x = data.observations;
  const double scale = mixture_scale(model, theta);

  std::vector<double> resp_sum(S, 0.0), wx(S, 0.0), wsum(S, 0.0), logp(S);
  std::vector<std::vector<double>> resp(x.size(), std::vector<double>(S));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t s = 0; s < S; ++s)
      logp[s] = theta.weights[s] > 0.0
                    ? std::log(theta.weights[s]) + kernel_log_pdf(kernel, x[i], theta.locations[s], scale)
                    : kNegInf;
    const double norm = log_sum_exp(logp);
    for (std::size_t s = 0; s < S; ++s) {
      const double r = std::exp(logp[s] - norm);
      resp[i][s] = r;
      resp_sum[s] += r;
      double u = 1.0;
      if (kernel == Kernel::Cauchy) {
        const double z = (x[i] - theta.locations[s]) / scale;
        u = 2.0 / (1.0 + z * z);
      }
      wx[s] += r * u * x[i];
      wsum[s] += r * u;
    }
  }

  ParamPoint next = theta;
  const double n = static_cast<double>(x.size());
  int low = 0;
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    double w = resp_sum[s] / n;
    if (w < kWeightFloor) {
      w = kWeightFloor;
      ++low;
    }
    next.weights[s] = w;
    total += w;
    if (wsum[s] > 0.0)
      next.locations[s] = std::clamp(wx[s] / wsum[s], -em.location_bound, em.location_bound);
  }
  for (auto& w : next.weights) w /= total;
  if (low > 0) log_warning("em_step: " + std::to_string(low) + " component weight(s) floored");
  if (floored) *floored = low;

  if (model.family == Family::AdaptiveMixture) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t s = 0; s < S; ++s) {
        const double d = x[i] - next.locations[s];
        ss += resp[i][s] * d * d;
      }
    const double lambda = ss > 0.0 ? n / ss : em.precision_hi;
    next.precision = std::clamp(lambda, em.precision_lo, em.precision_hi);
  }
  return next;
}

SieveFit sieve_mle(const ModelSpec& model, const SieveIndex& sieve, const Dataset& data,
                   const std::optional<EmConfig>& em) {
  model.validate();
  validate_dataset(model, data);
  const auto& x = data.observations;
  SieveFit fit;

  switch (model.family) {
    case Family::GaussianLocation:
      fit.point = ParamPoint::location(std::accumulate(x.begin(), x.end(), 0.0) /
                                       static_cast<double>(x.size()));
      break;
    case Family::Histogram: {
      const auto* dim = std::get_if<Dimension>(&sieve);
      if (!dim || dim->size < 1) throw std::invalid_argument("Histogram sieve must be Dimension(S)");
      const auto counts = bin_counts(x, dim->size);
      std::vector<double> w(counts.size());
      for (std::size_t s = 0; s < counts.size(); ++s)
        w[s] = static_cast<double>(counts[s]) / static_cast<double>(x.size());
      fit.point = ParamPoint::histogram(std::move(w));
      break;
    }
    case Family::SparseSequence: {
      const auto* subset = std::get_if<Subset>(&sieve);
      if (!subset) throw std::invalid_argument("SparseSequence sieve must be a Subset");
      validate_sieve(sieve, model.n);
      std::vector<double> values;
      values.reserve(subset->indices.size());
      for (int i : subset->indices) values.push_back(x[static_cast<std::size_t>(i)]);
      fit.point = ParamPoint::sparse(model.n, subset->indices, values);
      break;
    }
    case Family::FixedDesignRegression: {
      const auto* order = std::get_if<TruncationOrder>(&sieve);
      if (!order) throw std::invalid_argument("Regression sieve must be TruncationOrder(S)");
      if (order->order < 1) throw std::invalid_argument("TruncationOrder must be >= 1");
      fit.point = ParamPoint::regression(regression_mle(*data.design, x, order->order));
      break;
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture: {
      if (!em) throw std::invalid_argument("sieve_mle: EmConfig required for mixture families");
      em->validate();
      const auto* dim = std::get_if<Dimension>(&sieve);
      if (!dim || dim->size < 1) throw std::invalid_argument("Mixture sieve must be Dimension(S)");
      bool have = false;
      for (int r = 0; r < em->restarts; ++r) {
        ParamPoint cur = initial_point(model, dim->size, data, *em, r);
        double ll = log_likelihood(model, cur, data);
        bool converged = false;
        int it = 0, floored = 0;
        while (it < em->max_iters) {
          ++it;
          ParamPoint next = em_step(model, cur, data, *em, &floored);
          const double next_ll = log_likelihood(model, next, data);
          const double gain = next_ll - ll;
          cur = std::move(next);
          ll = next_ll;
          if (std::abs(gain) < em->tol) {
            converged = true;
            break;
          }
        }
        if (!have || ll > fit.log_likelihood) {
          have = true;
          fit.point = cur;
          fit.log_likelihood = ll;
          fit.converged = converged;
          fit.iterations = it;
          fit.floored_components = floored;
          fit.best_restart = r;
        }
      }
      if (!fit.converged)
        log_warning("sieve_mle: EM reached max_iters without meeting tol; best iterate returned");
      return fit;
    }
  }
  fit.log_likelihood = log_likelihood(model, fit.point, data);
  return fit;
}

}  // namespace ebrate
