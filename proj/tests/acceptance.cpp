#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "ebrate/divergence.hpp"
#include "ebrate/model.hpp"
#include "ebrate/numeric.hpp"
#include "ebrate/posterior.hpp"
#include "ebrate/prior.hpp"
#include "ebrate/probe.hpp"
#include "ebrate/rate_lab.hpp"

using namespace ebrate;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double sample_mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / x.size();
}

double normal_pdf(double x, double m, double var) {
  return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

Outcome conjugacy() {
  // 1-D Gaussian location
  const int n = 10;
  const auto model = ModelSpec::gaussian_location(n);
  const auto data = simulate(model, ParamPoint::location(0.4), 101);
  GaussianPrior prior;
  prior.mean = Eigen::VectorXd::Constant(1, sample_mean(data.observations) + 0.3);
  prior.cov = CovarianceDescriptor::isotropic(0.2);
  double tv_gauss = 0.0;
  for (double alpha : {1.0, 0.25}) {
    const auto post = posterior_gaussian_location(prior, model, data, alpha);
    const double m = post.mean(0), v = post.covariance(0, 0);
    const int pts = 2000;
    const double lo = m - 12.0 * std::sqrt(v), h = 24.0 * std::sqrt(v) / (pts - 1);
    std::vector<double> lw(pts), w(pts), diff(pts);
    for (int i = 0; i < pts; ++i) {
      const auto th = ParamPoint::location(lo + i * h);
      lw[i] = alpha * log_likelihood(model, th, data) + log_prior_density(EmpiricalPrior{prior}, th);
    }
    const double top = *std::max_element(lw.begin(), lw.end());
    for (int i = 0; i < pts; ++i) w[i] = std::exp(lw[i] - top);
    const double z = trapezoid(w, h);
    for (int i = 0; i < pts; ++i) diff[i] = std::abs(w[i] / z - normal_pdf(lo + i * h, m, v));
    tv_gauss = std::max(tv_gauss, 0.5 * trapezoid(diff, h));
  }

  // 3-bin histogram
  const std::vector<double> a{2.0, 3.0, 2.5};
  const std::vector<int> counts{6, 4, 9};
  const auto post = posterior_histogram(DirichletPrior{a}, counts);
  const EmpiricalPrior dir = DirichletPrior{a};
  const int steps = 400;
  const double h = 1.0 / steps;
  std::vector<double> grid, exact;
  for (int i = 1; i < steps; ++i)
    for (int j = 1; i + j < steps; ++j) {
      const std::vector<double> x{i * h, j * h, 1.0 - (i + j) * h};
      double lw = log_prior_density(dir, ParamPoint::histogram(x));
      for (int s = 0; s < 3; ++s) lw += counts[s] * std::log(x[s]);
      grid.push_back(lw);
      exact.push_back(log_dirichlet_density(post.alpha, x));
    }
  const double top = *std::max_element(grid.begin(), grid.end());
  double z = 0.0;
  for (double& g : grid) z += (g = std::exp(g - top));
  // simplex cell area in the (x1, x2) chart is h^2
  double tv_hist = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) tv_hist += 0.5 * std::abs(grid[k] / (z * h * h) - std::exp(exact[k])) * h * h;

  return {tv_gauss <= 1e-4 && tv_hist <= 1e-4,
          "TV gaussian=" + fmt("%.2e", tv_gauss) + " histogram=" + fmt("%.2e", tv_hist) + " (limit 1e-4)"};
}

Outcome sparse_exactness() {
  const int n = 12;
  const auto d = simulate(ModelSpec::sparse_sequence(n), ParamPoint::sparse(n, {0, 4, 9}, {2.5, -2.0, 1.8}), 202);
  SparseSamplerCfg exact;
  exact.mode = SparseMode::ExactEnumeration;
  const double alpha = alpha_from_p(2.0);
  const auto truth = inclusion_probabilities(
      std::get<IndexEnumeration>(posterior_sparse_mean(d, WeightConstants{}, 0.1, alpha, exact)), n);
  SparseSamplerCfg gibbs;
  gibbs.seed = 203;
  gibbs.sweeps = 100000;
  const auto bag = std::get<SampleBag>(posterior_sparse_mean(d, WeightConstants{}, 0.1, alpha, gibbs));
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double se = bag.diagnostics.inclusion_se[i];
    const double z = std::abs(bag.diagnostics.inclusion_prob[i] - truth[i]) / std::max(se, 1e-12);
    worst = std::max(worst, z);
  }
  return {worst < 3.0, "max |gibbs - enumeration| / se = " + fmt("%.3f", worst) + " over 12 coordinates"};
}

Outcome toy_lp1() {
  const double C = std::log(2.0);
  bool ok = true;
  std::string detail;
  for (int n : {100, 10000}) {
    const auto model = ModelSpec::gaussian_location(n);
    const auto data = simulate(model, ParamPoint::location(0.0), 300 + n);
    const double xbar = sample_mean(data.observations);
    GaussianPrior g;
    g.mean = Eigen::VectorXd::Constant(1, xbar);
    const double s = toy_prior_sd(C, n);
    g.cov = CovarianceDescriptor::isotropic(s * s);
    const auto est = lp1_mass(g, model, data, ParamPoint::location(xbar), 1.0, 1.0, 100000, 301 + n);
    const double z = std::abs(est.estimate - std::exp(-C)) / est.std_error;
    ok = ok && z < 3.0;
    detail += "n=" + std::to_string(n) + " estimate=" + fmt("%.5f", est.estimate) + " (" + fmt("%.2f", z) + " se) ";
  }
  return {ok, detail + "target 0.5"};
}

Outcome gp1() {
  const int n = 100;
  const auto model = ModelSpec::gaussian_location(n);
  const double s = toy_prior_sd(std::log(2.0), n);
  const GaussianPriorBuilder builder = [s](const Dataset& d) {
    GaussianPrior g;
    g.mean = Eigen::VectorXd::Constant(1, sample_mean(d.observations));
    g.cov = CovarianceDescriptor::isotropic(s * s);
    return g;
  };
  bool ok = true;
  std::string detail;
  for (double p : {2.0, 3.0}) {
    const auto r = gp1_integral_1d(builder, model, ParamPoint::location(0.0), p, Gp1GridCfg{}, 5000, 401);
    const double toy = gp1_toy_expression(s, n, p) / gp1_toy_constant(p);
    Eigen::MatrixXd psi(1, 1), fisher(1, 1);
    psi(0, 0) = 1.0 / (n * s * s);
    fisher(0, 0) = 1.0;
    const double det = gp1_determinant_form(psi, fisher, p);
    const double e1 = std::abs(r.value / toy - 1.0), e2 = std::abs(r.value / det - 1.0);
    ok = ok && e1 < 0.05 && e2 < 0.05 && !r.truncated;
    detail += "p=" + fmt("%g", p) + " mc=" + fmt("%.4f", r.value) + " toy=" + fmt("%.4f", toy) +
              " det=" + fmt("%.4f", det) + " rel=" + fmt("%.3f", std::max(e1, e2)) + "; ";
  }
  return {ok, detail + "limit 5%"};
}

std::string slope_text(const RateCurve& c) {
  return "slope=" + fmt("%.3f", c.fit.slope) + " se=" + fmt("%.3f", c.fit.slope_se);
}

Outcome gaussian_rate() {
  RateStudyConfig cfg;
  cfg.family = Family::GaussianLocation;
  cfg.n_grid = {100, 316, 1000, 3162, 10000};
  cfg.replicates = 200;
  cfg.draws = 1000;
  cfg.M = 2.0;
  cfg.seed = 501;
  cfg.threads = default_threads();
  const auto c = run_rate_study(cfg);
  return {std::abs(c.fit.slope + 1.0) <= 0.15, slope_text(c) + " target -1 +- 0.15"};
}

Outcome regression_rate() {
  RateStudyConfig cfg;
  cfg.family = Family::FixedDesignRegression;
  cfg.beta = 2.0;
  cfg.n_grid = {100, 200, 400, 800, 1600, 3200};
  cfg.replicates = 100;
  cfg.draws = 200;
  cfg.M = 2.0;
  cfg.seed = 601;
  cfg.threads = default_threads();
  const auto c = run_rate_study(cfg);
  return {std::abs(c.fit.slope + 0.8) <= 0.2, slope_text(c) + " target -0.8 +- 0.2"};
}

Outcome sparse_ball() {
  RateStudyConfig cfg;
  cfg.family = Family::SparseSequence;
  cfg.n_grid = {500};
  cfg.truth.s_star = 5;
  cfg.truth.signal = 5.0;
  cfg.replicates = 50;
  cfg.draws = 1000;
  cfg.calibration = Calibration::BallMass;
  cfg.calibration_target = 0.9;
  cfg.M_candidates = {1, 2, 4, 8, 16};
  cfg.pilot_replicates = 20;
  cfg.seed = 701;
  cfg.threads = default_threads();
  const double M = calibrate_M(cfg);
  cfg.M = M;
  const auto c = run_rate_study(cfg);
  const auto& p = c.points.front();
  return {M <= 20.0 && p.ball_mass >= 0.9,
          "pilot M=" + fmt("%g", M) + " fresh-seed ball mass=" + fmt("%.4f", p.ball_mass) + " se=" +
              fmt("%.4f", p.ball_mass_se) + " (need >= 0.9, M <= 20)"};
}

Outcome histogram_trend() {
  RateStudyConfig cfg;
  cfg.family = Family::Histogram;
  cfg.beta = 1.0;
  cfg.n_grid = {200, 400, 800, 1600, 3200, 6400};
  cfg.replicates = 100;
  cfg.draws = 200;
  cfg.M = 2.0;
  cfg.response = Response::MeanDistance;
  cfg.seed = 801;
  cfg.threads = default_threads();
  const auto c = run_rate_study(cfg);
  bool decreasing = true;
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    const auto& a = c.points[k - 1];
    const auto& b = c.points[k];
    decreasing = decreasing && b.mean_distance < a.mean_distance + 2.0 * std::hypot(a.mean_distance_se, b.mean_distance_se);
  }
  const bool slope_ok = std::abs(c.fit.slope + 1.0 / 3.0) <= 0.2;
  return {decreasing && slope_ok, std::string("decreasing=") + (decreasing ? "yes" : "no") + " " + slope_text(c) +
                                      " target -0.333 +- 0.2"};
}

Outcome identities() {
  double worst_gauss = 0.0, worst_mix = 0.0;
  bool joint = true;
  const auto g = ModelSpec::gaussian_location(7, 1.3);
  for (double shift : {0.1, 0.7, 2.0}) {
    const auto a = ParamPoint::location(0.2), b = ParamPoint::location(0.2 + shift);
    worst_gauss = std::max(worst_gauss, std::abs(hellinger_sq(g, a, b, DivMethod::ClosedForm) -
                                                 hellinger_sq(g, a, b, DivMethod::Quadrature)));
    const auto kc = kl_and_v(g, a, b, DivMethod::ClosedForm), kq = kl_and_v(g, a, b, DivMethod::Quadrature);
    worst_gauss = std::max({worst_gauss, std::abs(kc.K - kq.K), std::abs(kc.V - kq.V)});
  }
  // mixtures: one-component normal mixture against the Gaussian closed form, and
  // two-component mixtures against a brute-force midpoint rule
  const auto m1 = ModelSpec::finite_mixture(7, Kernel::Normal, 1.3);
  for (double shift : {0.1, 0.7, 2.0})
    worst_mix = std::max(worst_mix, std::abs(hellinger_sq(m1, ParamPoint::mixture({1.0}, {0.2}),
                                                          ParamPoint::mixture({1.0}, {0.2 + shift}), DivMethod::Quadrature) -
                                             hellinger_sq(g, ParamPoint::location(0.2), ParamPoint::location(0.2 + shift),
                                                          DivMethod::ClosedForm)));
  for (auto kernel : {Kernel::Normal, Kernel::Cauchy}) {
    const auto model = ModelSpec::finite_mixture(5, kernel, 0.8);
    const auto a = ParamPoint::mixture({0.3, 0.7}, {-1.0, 1.2}), b = ParamPoint::mixture({0.55, 0.45}, {-0.4, 2.0});
    auto pdf = [&](const ParamPoint& p, double x) {
      double acc = 0.0;
      for (std::size_t s = 0; s < p.weights.size(); ++s) {
        const double z = (x - p.locations[s]) / 0.8;
        acc += p.weights[s] * (kernel == Kernel::Normal ? std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi)
                                                        : 1.0 / (std::numbers::pi * (1 + z * z))) / 0.8;
      }
      return acc;
    };
    // Cauchy tails: substitute x = tan(u) over (-pi/2, pi/2)
    const int pts = 2000000;
    double aff = 0.0;
    for (int i = 0; i < pts; ++i) {
      const double u = -std::numbers::pi / 2 + (i + 0.5) * std::numbers::pi / pts;
      const double x = std::tan(u), jac = 1.0 / (std::cos(u) * std::cos(u));
      aff += std::sqrt(pdf(a, x) * pdf(b, x)) * jac * std::numbers::pi / pts;
    }
    worst_mix = std::max(worst_mix, std::abs(hellinger_sq(model, a, b, DivMethod::Quadrature) - (1.0 - aff)));
  }
  for (double h : {0.0, 0.013, 0.25, 0.9, 1.0}) {
    joint = joint && joint_iid_hellinger_sq(h, 1) == h;
    for (int n : {2, 10, 500}) joint = joint && std::abs(joint_iid_hellinger_sq(h, n) - (1.0 - std::pow(1.0 - h, n))) <= 1e-15;
  }
  return {worst_gauss <= 1e-8 && worst_mix <= 1e-6 && joint,
          "gaussian max err=" + fmt("%.2e", worst_gauss) + " mixture max err=" + fmt("%.2e", worst_mix) +
              " joint identity " + (joint ? "holds to round-off" : "broken")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "ebrate_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<RateStudyConfig> studies;
  {
    RateStudyConfig c;
    c.family = Family::GaussianLocation;
    c.n_grid = {50, 100, 200};
    c.replicates = 20;
    c.draws = 200;
    c.seed = 1001;
    studies.push_back(c);
  }
  {
    RateStudyConfig c;
    c.family = Family::SparseSequence;
    c.truth.s_star = 2;
    c.n_grid = {20, 40, 80};
    c.replicates = 20;
    c.draws = 100;
    c.seed = 1002;
    studies.push_back(c);
  }
  {
    RateStudyConfig c;
    c.family = Family::FiniteMixture;
    c.kernel = Kernel::Normal;
    c.truth.locations = {-1.5, 1.5};
    c.n_grid = {50, 100, 200};
    c.replicates = 20;
    c.draws = 1000;
    c.M = 2.0;
    c.seed = 1003;
    studies.push_back(c);
  }
  bool same = true;
  int k = 0;
  for (auto cfg : studies) {
    for (int run = 0; run < 2; ++run) {
      cfg.threads = run == 0 ? 1 : 2;
      const auto path = dir / ("s" + std::to_string(k) + "_" + std::to_string(run) + ".csv");
      persist(run_rate_study(cfg), cfg, path);
    }
    const auto a = dir / ("s" + std::to_string(k) + "_0.csv"), b = dir / ("s" + std::to_string(k) + "_1.csv");
    same = same && slurp(a) == slurp(b) && !slurp(a).empty();
    ++k;
  }
  fs::remove_all(dir);
  // manifests record the thread count, so only the CSV files are compared across thread counts
  return {same, std::string("3 studies (gaussian, sparse gibbs, mixture MH) rerun with 1 and 2 threads: CSV files ") +
                    (same ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, conjugacy},   {2, sparse_exactness}, {3, toy_lp1},         {4, gp1},        {5, gaussian_rate},
      {6, regression_rate}, {7, sparse_ball}, {8, histogram_trend}, {9, identities}, {10, determinism}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
