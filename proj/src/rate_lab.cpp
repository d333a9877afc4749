#include "ebrate/rate_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ebrate/config.hpp"
#include "ebrate/divergence.hpp"
#include "ebrate/log.hpp"
#include "ebrate/numeric.hpp"
#include "ebrate/posterior.hpp"
#include "ebrate/prior.hpp"
#include "ebrate/random.hpp"
#include "ebrate/sieve_mle.hpp"

namespace ebrate {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

constexpr std::uint64_t kPilotStream = 0x70696c6f74ULL;
constexpr int kExactDrawFactor = 10;
constexpr double kMaxFailureShare = 0.05;

template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(workers, count); ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

std::string sanitize(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ch == ',' ? ';' : ' ';
  return s;
}

/// Everything that depends on n only.
struct NContext {
  int n = 0;
  ModelSpec model;
  Schedule schedule;
  ParamPoint truth;
  std::vector<double> roots;  // histogram
  std::shared_ptr<const FourierDesign> design;
  std::vector<double> f_star;
  Eigen::VectorXd w_star;
  double residual_sq = 0.0;
};

/// Per-draw statistics of one replicate posterior, scaled by n eps^2.
struct DrawStats {
  std::vector<double> tail_stat;  // -log joint affinity / (n eps^2)
  std::vector<double> ball_stat;  // sample-scale squared distance / (n eps^2)
  double sum_sq = 0.0;
  double sum_d = 0.0;

  void add(double d2, double neg_log_aff, double scaled_d2, double n_eps2) {
    d2 = std::max(0.0, d2);
    tail_stat.push_back(neg_log_aff / n_eps2);
    ball_stat.push_back(scaled_d2 / n_eps2);
    sum_sq += d2;
    sum_d += std::sqrt(d2);
  }
  double tail(double M) const {
    const auto k = std::count_if(tail_stat.begin(), tail_stat.end(), [&](double u) { return u > M * M; });
    return static_cast<double>(k) / static_cast<double>(tail_stat.size());
  }
  double ball(double M) const {
    const auto k = std::count_if(ball_stat.begin(), ball_stat.end(), [&](double v) { return v <= M; });
    return static_cast<double>(k) / static_cast<double>(ball_stat.size());
  }
};

ScheduleOptions schedule_options(const RateStudyConfig& cfg) {
  ScheduleOptions o;
  o.beta = cfg.beta;
  o.b = cfg.b;
  o.gamma = cfg.gamma;
  o.B = cfg.B;
  o.S_max = cfg.S_max;
  o.sigma = cfg.family == Family::SparseSequence ? 1.0 : cfg.sigma;
  o.C = cfg.C;
  if (cfg.family == Family::SparseSequence) o.s_star = cfg.truth.s_star;
  return o;
}

NContext make_context(const RateStudyConfig& cfg, int n) {
  NContext c;
  c.n = n;
  c.model = cfg.model(n);
  c.schedule = compute_schedule(cfg.family, n, schedule_options(cfg));
  if (cfg.family != Family::Histogram) c.truth = truth_point(cfg, n);
  switch (cfg.family) {
    case Family::Histogram:
      c.roots = linear_root_integrals(LinearDensity{cfg.truth.slope}, c.schedule.S);
      break;
    case Family::FixedDesignRegression: {
      const int S_max = c.schedule.S_max.value_or(1);
      c.design = std::make_shared<const FourierDesign>(FourierDesign::make(n, S_max));
      c.f_star = regression_function(c.truth.theta, c.design->t);
      const auto fits = nested_least_squares(*c.design, c.f_star);
      c.w_star = fits.z;
      c.residual_sq = std::max(0.0, fits.yy - fits.z.squaredNorm());
      break;
    }
    default: break;
  }
  return c;
}

DrawStats gaussian_replicate(const RateStudyConfig& cfg, const NContext& c, double alpha, std::uint64_t seed) {
  const auto data = simulate(c.model, c.truth, seed);
  const auto fit = sieve_mle(c.model, Dimension{1}, data);
  const auto prior = std::get<GaussianPrior>(build_prior(cfg.family, fit.point, c.schedule));
  const auto post = posterior_gaussian_location(prior, c.model, data, alpha);
  const double n_eps2 = c.schedule.n_eps2();
  const double mean = post.mean(0), sd = post.cov_chol(0, 0), star = c.truth.theta[0];
  const double s2 = c.model.sigma * c.model.sigma;
  Rng rng(derive_seed(seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  DrawStats st;
  for (int i = 0; i < kExactDrawFactor * cfg.draws; ++i) {
    const double diff = mean + sd * gauss(rng) - star;
    const double d2 = diff * diff;
    st.add(d2, c.n * d2 / (8.0 * s2), c.n * d2, n_eps2);
  }
  return st;
}

DrawStats histogram_replicate(const RateStudyConfig& cfg, const NContext& c, double alpha, std::uint64_t seed) {
  const auto data = simulate(c.model, LinearDensity{cfg.truth.slope}, seed);
  const int S = c.schedule.S;
  const auto fit = sieve_mle(c.model, Dimension{S}, data);
  const auto prior = std::get<DirichletPrior>(build_prior(cfg.family, fit.point, c.schedule));
  const auto post = posterior_histogram(prior, bin_counts(data.observations, S), alpha);
  const double n_eps2 = c.schedule.n_eps2();
  Rng rng(derive_seed(seed, 1));
  DrawStats st;
  for (int i = 0; i < kExactDrawFactor * cfg.draws; ++i) {
    const auto w = sample_dirichlet(post.alpha, rng);
    const double rho = std::min(1.0, histogram_affinity(w, c.roots));
    const double h2 = 1.0 - rho;
    st.add(h2, rho > 0.0 ? -c.n * std::log(rho) : std::numeric_limits<double>::infinity(), c.n * h2, n_eps2);
  }
  return st;
}

DrawStats sparse_replicate(const RateStudyConfig& cfg, const NContext& c, double alpha, std::uint64_t seed) {
  const auto data = simulate(c.model, c.truth, seed);
  SparseSamplerCfg sc;
  sc.mode = c.n <= kMaxEnumerationN ? SparseMode::ExactEnumeration : SparseMode::Gibbs;
  sc.seed = derive_seed(seed, 2);
  sc.sweeps = std::max(2000, 2 * cfg.draws);
  sc.max_draws = cfg.draws;
  const auto post = posterior_sparse_mean(data, WeightConstants{c.schedule.B.value_or(1.0)},
                                          c.schedule.gamma.value_or(0.1), alpha, sc);
  const auto draws = posterior_draws(post, kExactDrawFactor * cfg.draws, derive_seed(seed, 1));
  const double n_eps2 = c.schedule.n_eps2();
  DrawStats st;
  for (const auto& d : draws) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < d.theta.size(); ++i) {
      const double diff = d.theta[i] - c.truth.theta[i];
      d2 += diff * diff;
    }
    st.add(d2, d2 / 8.0, d2, n_eps2);
  }
  return st;
}

DrawStats regression_replicate(const RateStudyConfig& cfg, const NContext& c, double alpha, std::uint64_t seed) {
  Rng noise(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset data;
  data.seed = seed;
  data.design = c.design->t;
  data.observations.resize(static_cast<std::size_t>(c.n));
  for (int i = 0; i < c.n; ++i)
    data.observations[static_cast<std::size_t>(i)] = c.f_star[static_cast<std::size_t>(i)] + cfg.sigma * gauss(noise);
  const int S_max = c.schedule.S_max.value_or(1);
  const auto post = posterior_regression(data, c.design, WeightConstants{c.schedule.B.value_or(1.0)},
                                         c.schedule.gamma.value_or(0.1), alpha, S_max, cfg.sigma);
  const double n_eps2 = c.schedule.n_eps2();
  const double s2 = cfg.sigma * cfg.sigma;
  Rng rng(derive_seed(seed, 1));
  DrawStats st;
  for (int i = 0; i < kExactDrawFactor * cfg.draws; ++i) {
    const auto j = sample_index(post.log_weights, rng);
    const Eigen::VectorXd w = post.regression->whitened_draw(static_cast<int>(j) + 1, rng);
    const double ss = (w - c.w_star).squaredNorm() + c.residual_sq;
    st.add(ss / c.n, ss / (8.0 * s2), ss, n_eps2);
  }
  return st;
}

DrawStats mixture_replicate(const RateStudyConfig& cfg, const NContext& c, double alpha, std::uint64_t seed) {
  const auto data = simulate(c.model, c.truth, seed);
  const EmConfig em = em_config_for(c.schedule, derive_seed(seed, 2));
  EmpiricalPrior prior;
  if (cfg.family == Family::AdaptiveMixture) {
    WeightConstants k;
    k.D = c.schedule.D.value_or(1.0);
    k.r = c.schedule.r.value_or(1.5);
    prior = build_hierarchical_prior(c.model, data, c.schedule, k, em);
  } else {
    const auto fit = sieve_mle(c.model, Dimension{c.schedule.S}, data, em);
    prior = build_prior(cfg.family, fit.point, c.schedule);
  }
  const int draws = std::max(1000, cfg.draws);
  const auto bag = posterior_mixture_mh(c.model, data, prior, alpha, derive_seed(seed, 3), draws, draws / 2);
  const double n_eps2 = c.schedule.n_eps2();
  DrawStats st;
  const ParamPoint* prev = nullptr;
  double h2 = 0.0;
  for (const auto& d : bag.draws) {
    if (!prev || !(d == *prev)) h2 = std::clamp(hellinger_sq(c.model, c.truth, d, DivMethod::Quadrature), 0.0, 1.0);
    prev = &d;
    const double nla = h2 < 1.0 ? -c.n * std::log1p(-h2) : std::numeric_limits<double>::infinity();
    st.add(h2, nla, c.n * h2, n_eps2);
  }
  return st;
}

DrawStats run_replicate(const RateStudyConfig& cfg, const NContext& c, double alpha, std::uint64_t seed) {
  switch (cfg.family) {
    case Family::GaussianLocation: return gaussian_replicate(cfg, c, alpha, seed);
    case Family::Histogram: return histogram_replicate(cfg, c, alpha, seed);
    case Family::SparseSequence: return sparse_replicate(cfg, c, alpha, seed);
    case Family::FixedDesignRegression: return regression_replicate(cfg, c, alpha, seed);
    default: return mixture_replicate(cfg, c, alpha, seed);
  }
}

struct Task {
  std::size_t context = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
};

struct TaskResult {
  bool ok = false;
  std::string error;
  DrawStats stats;
};

std::vector<TaskResult> run_tasks(const RateStudyConfig& cfg, const std::vector<NContext>& contexts,
                                  const std::vector<Task>& tasks, double alpha) {
  std::vector<TaskResult> results(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    auto& r = results[i];
    try {
      r.stats = run_replicate(cfg, contexts[tasks[i].context], alpha, tasks[i].seed);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = sanitize(e.what());
    }
  });
  return results;
}

void check_failures(const std::vector<TaskResult>& results) {
  std::size_t failed = 0;
  const std::string* first = nullptr;
  for (const auto& r : results)
    if (!r.ok) {
      ++failed;
      if (!first) first = &r.error;
    }
  if (static_cast<double>(failed) > kMaxFailureShare * static_cast<double>(results.size()))
    throw std::runtime_error("rate study failed: " + std::to_string(failed) + " of " +
                             std::to_string(results.size()) + " replicates errored; first: " + *first);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

nlohmann::json fit_to_json(const RateFit& f) {
  nlohmann::json j;
  j["slope"] = format_double(f.slope);
  j["intercept"] = format_double(f.intercept);
  j["r2"] = format_double(f.r2);
  j["slope_se"] = format_double(f.slope_se);
  j["dropped"] = f.dropped;
  auto res = nlohmann::json::array();
  for (double r : f.residuals) res.push_back(format_double(r));
  j["residuals"] = res;
  return j;
}

RateFit fit_from_json(const nlohmann::json& j) {
  RateFit f;
  f.slope = parse_double(j.at("slope").get<std::string>());
  f.intercept = parse_double(j.at("intercept").get<std::string>());
  f.r2 = parse_double(j.at("r2").get<std::string>());
  f.slope_se = parse_double(j.at("slope_se").get<std::string>());
  f.dropped = j.at("dropped").get<int>();
  for (const auto& r : j.at("residuals")) f.residuals.push_back(parse_double(r.get<std::string>()));
  return f;
}

const char* const kRowHeader = "n,replicate,seed,status,tail_mass,mean_sq_distance,mean_distance,ball_mass,error";
const char* const kSummaryHeader =
    "n,eps_n,replicates_ok,failures,tail_mass,tail_mass_se,mean_sq_distance,mean_sq_distance_se,"
    "mean_distance,mean_distance_se,ball_mass,ball_mass_se";

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Response r) {
  switch (r) {
    case Response::TailMass: return "tail_mass";
    case Response::MeanSqDistance: return "mean_sq_distance";
    case Response::MeanDistance: return "mean_distance";
  }
  return "?";
}

Response response_from_string(std::string_view name) {
  for (auto r : {Response::TailMass, Response::MeanSqDistance, Response::MeanDistance})
    if (to_string(r) == name) return r;
  invalid("unknown response '" + std::string(name) + "' (expected tail_mass, mean_sq_distance, mean_distance)");
}

std::string_view to_string(Calibration c) { return c == Calibration::TailMass ? "tail_mass" : "ball_mass"; }

Calibration calibration_from_string(std::string_view name) {
  if (name == "tail_mass") return Calibration::TailMass;
  if (name == "ball_mass") return Calibration::BallMass;
  invalid("unknown calibration '" + std::string(name) + "' (expected tail_mass, ball_mass)");
}

void RateStudyConfig::validate() const {
  if (n_grid.empty()) invalid("n_grid must not be empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 3) invalid("n_grid entries must be at least 3");
    if (i && n_grid[i] <= n_grid[i - 1]) invalid("n_grid must be strictly increasing");
  }
  if (replicates < 20) invalid("replicates must be at least 20");
  if (draws < 1) invalid("draws must be positive");
  if (!(sigma > 0.0)) invalid("sigma must be positive");
  if (M && !(*M > 0.0)) invalid("M must be positive");
  if (M_candidates.empty()) invalid("M_candidates must not be empty");
  for (std::size_t i = 0; i < M_candidates.size(); ++i) {
    if (!(M_candidates[i] > 0.0)) invalid("M_candidates must be positive");
    if (i && M_candidates[i] <= M_candidates[i - 1]) invalid("M_candidates must be increasing");
  }
  if (!(calibration_target > 0.0 && calibration_target < 1.0)) invalid("calibration_target must lie in (0, 1)");
  if (pilot_replicates < 1) invalid("pilot_replicates must be positive");
  if (p && !(*p > 1.0)) invalid("p must exceed 1");
  if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) invalid("alpha must lie in (0, 1]");
  if (threads < 1) invalid("threads must be positive");
  if (family == Family::Histogram) {
    if (!beta) invalid("beta is required for Histogram");
    if (!(std::abs(truth.slope) < 1.0)) invalid("truth.slope must lie in (-1, 1)");
  }
  if (family == Family::SparseSequence) {
    if (truth.s_star < 0) invalid("truth.s_star must be non-negative");
    if (truth.s_star >= n_grid.front()) invalid("truth.s_star must be below every n");
  }
  if (family == Family::FixedDesignRegression && truth.terms < 1) invalid("truth.terms must be positive");
  if (is_mixture(family)) {
    if (truth.weights.empty() || truth.weights.size() != truth.locations.size())
      invalid("truth.weights and truth.locations must have equal, positive length");
    double total = 0.0;
    for (double w : truth.weights) {
      if (!(w > 0.0)) invalid("truth.weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) invalid("truth.weights must sum to 1");
    if (family == Family::AdaptiveMixture && !(truth.precision > 0.0)) invalid("truth.precision must be positive");
  }
  if (family == Family::FiniteMixture && !kernel) invalid("kernel is required for FiniteMixture");
  if (family != Family::FiniteMixture && kernel && family != Family::AdaptiveMixture)
    invalid("kernel applies to mixture families only");
  model(n_grid.front()).validate();
  compute_schedule(family, n_grid.front(), schedule_options(*this));
}

ModelSpec RateStudyConfig::model(int n) const {
  switch (family) {
    case Family::GaussianLocation: return ModelSpec::gaussian_location(n, sigma);
    case Family::Histogram: return ModelSpec::histogram(n);
    case Family::FiniteMixture: return ModelSpec::finite_mixture(n, kernel.value_or(Kernel::Normal), sigma);
    case Family::SparseSequence: return ModelSpec::sparse_sequence(n);
    case Family::FixedDesignRegression: return ModelSpec::regression(n, sigma);
    case Family::AdaptiveMixture: return ModelSpec::adaptive_mixture(n);
  }
  invalid("unknown family");
}

double resolve_alpha(const RateStudyConfig& cfg) {
  if (cfg.alpha) return *cfg.alpha;
  if (cfg.p) return alpha_from_p(*cfg.p);
  switch (cfg.family) {
    case Family::SparseSequence:
    case Family::FixedDesignRegression:
    case Family::AdaptiveMixture: return alpha_from_p(2.0);
    default: return 1.0;
  }
}

ParamPoint truth_point(const RateStudyConfig& cfg, int n) {
  const auto& t = cfg.truth;
  switch (cfg.family) {
    case Family::GaussianLocation: return ParamPoint::location(t.location);
    case Family::SparseSequence: {
      std::vector<int> idx;
      std::vector<double> vals;
      for (int k = 0; k < t.s_star; ++k) {
        idx.push_back(static_cast<int>(static_cast<long long>(k) * n / t.s_star));
        vals.push_back(k % 2 == 0 ? t.signal : -t.signal);
      }
      return ParamPoint::sparse(n, std::move(idx), vals);
    }
    case Family::FixedDesignRegression: {
      const double decay = cfg.beta.value_or(1.0) + 0.5;
      std::vector<double> coef(static_cast<std::size_t>(t.terms));
      for (int j = 1; j <= t.terms; ++j) coef[static_cast<std::size_t>(j - 1)] = std::pow(j, -decay);
      return ParamPoint::regression(std::move(coef));
    }
    case Family::FiniteMixture: return ParamPoint::mixture(t.weights, t.locations);
    case Family::AdaptiveMixture: return ParamPoint::adaptive_mixture(t.weights, t.locations, t.precision);
    case Family::Histogram: invalid("histogram truth is a LinearDensity, not a parameter point");
  }
  invalid("unknown family");
}

// ---------------------------------------------------------------------------

double calibrate_M(const RateStudyConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_grid.back();
  const std::vector<NContext> contexts{make_context(cfg, n)};
  std::vector<Task> tasks;
  const std::uint64_t pilot = derive_seed(cfg.seed, kPilotStream);
  for (int r = 0; r < cfg.pilot_replicates; ++r)
    tasks.push_back({0, r, derive_seed(pilot, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r))});
  const auto results = run_tasks(cfg, contexts, tasks, resolve_alpha(cfg));
  check_failures(results);
  for (double M : cfg.M_candidates) {
    double acc = 0.0;
    int ok = 0;
    for (const auto& r : results) {
      if (!r.ok) continue;
      acc += cfg.calibration == Calibration::TailMass ? r.stats.tail(M) : r.stats.ball(M);
      ++ok;
    }
    const double mean = acc / ok;
    const bool met = cfg.calibration == Calibration::TailMass ? mean < cfg.calibration_target
                                                              : mean >= cfg.calibration_target;
    if (met) return M;
  }
  log_warning("calibrate_M: no candidate met the target; using the largest");
  return cfg.M_candidates.back();
}

RateCurve run_rate_study(const RateStudyConfig& cfg) {
  cfg.validate();
  RateCurve curve;
  curve.M = cfg.M ? *cfg.M : calibrate_M(cfg);
  curve.alpha = resolve_alpha(cfg);
  curve.response = cfg.response;

  std::vector<NContext> contexts;
  for (int n : cfg.n_grid) contexts.push_back(make_context(cfg, n));
  std::vector<Task> tasks;
  for (std::size_t k = 0; k < contexts.size(); ++k)
    for (int r = 0; r < cfg.replicates; ++r)
      tasks.push_back({k, r, derive_seed(cfg.seed, static_cast<std::uint64_t>(contexts[k].n),
                                         static_cast<std::uint64_t>(r))});
  const auto results = run_tasks(cfg, contexts, tasks, curve.alpha);
  check_failures(results);

  std::vector<std::vector<double>> tail(contexts.size()), sq(contexts.size()), dist(contexts.size()),
      ball(contexts.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const auto& res = results[i];
    ReplicateRow row;
    row.n = contexts[t.context].n;
    row.replicate = t.replicate;
    row.seed = t.seed;
    row.ok = res.ok;
    row.error = res.error;
    if (res.ok) {
      const double count = static_cast<double>(res.stats.tail_stat.size());
      row.tail_mass = res.stats.tail(curve.M);
      row.mean_sq_distance = res.stats.sum_sq / count;
      row.mean_distance = res.stats.sum_d / count;
      row.ball_mass = res.stats.ball(curve.M);
      tail[t.context].push_back(row.tail_mass);
      sq[t.context].push_back(row.mean_sq_distance);
      dist[t.context].push_back(row.mean_distance);
      ball[t.context].push_back(row.ball_mass);
    }
    curve.rows.push_back(std::move(row));
  }
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    RatePoint p;
    p.n = contexts[k].n;
    p.eps_n = contexts[k].schedule.epsilon_n;
    p.replicates_ok = static_cast<int>(tail[k].size());
    p.failures = cfg.replicates - p.replicates_ok;
    if (p.replicates_ok > 0) {
      const auto a = mean_and_se(tail[k]);
      const auto b = mean_and_se(sq[k]);
      const auto c = mean_and_se(dist[k]);
      const auto d = mean_and_se(ball[k]);
      p.tail_mass = a.mean, p.tail_mass_se = a.se;
      p.mean_sq_distance = b.mean, p.mean_sq_distance_se = b.se;
      p.mean_distance = c.mean, p.mean_distance_se = c.se;
      p.ball_mass = d.mean, p.ball_mass_se = d.se;
    }
    curve.points.push_back(p);
  }
  try {
    curve.fit = fit_rate_exponent(curve, cfg.response);
  } catch (const std::invalid_argument& e) {
    log_warning(std::string("rate study: exponent not fitted: ") + e.what());
  }
  return curve;
}

// ---------------------------------------------------------------------------

double response_value(const RatePoint& p, Response r) {
  switch (r) {
    case Response::TailMass: return p.tail_mass;
    case Response::MeanSqDistance: return p.mean_sq_distance;
    case Response::MeanDistance: return p.mean_distance;
  }
  return 0.0;
}

RateFit fit_power_law(const std::vector<double>& n, const std::vector<double>& y) {
  if (n.size() != y.size()) invalid("fit_power_law: length mismatch");
  std::vector<double> lx, ly;
  RateFit fit;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(y[i] > 0.0) || !std::isfinite(y[i]) || !(n[i] > 0.0)) {
      ++fit.dropped;
      continue;
    }
    lx.push_back(std::log(n[i]));
    ly.push_back(std::log(y[i]));
  }
  if (fit.dropped > 0) log_warning("fit_power_law: dropped " + std::to_string(fit.dropped) + " non-positive responses");
  const std::size_t m = lx.size();
  if (m < 3) invalid("fit_power_law: fewer than 3 positive responses");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) mx += lx[i], my += ly[i];
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) invalid("fit_power_law: sample sizes must differ");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    fit.residuals.push_back(r);
    sse += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.slope_se = m > 2 ? std::sqrt(sse / static_cast<double>(m - 2) / sxx) : 0.0;
  return fit;
}

RateFit fit_rate_exponent(const RateCurve& curve, Response response) {
  std::vector<double> n, y;
  for (const auto& p : curve.points) {
    n.push_back(p.n);
    y.push_back(response_value(p, response));
  }
  return fit_power_law(n, y);
}

// ---------------------------------------------------------------------------

std::filesystem::path manifest_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p += ".json";
  return p;
}

void persist(const RateCurve& curve, const RateStudyConfig& cfg, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# ebrate rate study\n# schema_version=" << kRateSchemaVersion << "\n" << kRowHeader << "\n";
  for (const auto& r : curve.rows) {
    out << r.n << ',' << r.replicate << ',' << r.seed << ',' << (r.ok ? "ok" : "error") << ','
        << format_double(r.tail_mass) << ',' << format_double(r.mean_sq_distance) << ','
        << format_double(r.mean_distance) << ',' << format_double(r.ball_mass) << ',' << sanitize(r.error) << "\n";
  }
  out << "# summary\n" << kSummaryHeader << "\n";
  for (const auto& p : curve.points) {
    out << p.n << ',' << format_double(p.eps_n) << ',' << p.replicates_ok << ',' << p.failures;
    for (double v : {p.tail_mass, p.tail_mass_se, p.mean_sq_distance, p.mean_sq_distance_se, p.mean_distance,
                     p.mean_distance_se, p.ball_mass, p.ball_mass_se})
      out << ',' << format_double(v);
    out << "\n";
  }
  out << "# fit response=" << to_string(curve.response) << " slope=" << format_double(curve.fit.slope)
      << " r2=" << format_double(curve.fit.r2) << "\n";

  nlohmann::json manifest;
  manifest["schema_version"] = kRateSchemaVersion;
  manifest["config"] = rate_study_to_json(cfg);
  manifest["M"] = format_double(curve.M);
  manifest["alpha"] = format_double(curve.alpha);
  manifest["response"] = std::string(to_string(curve.response));
  manifest["fit"] = fit_to_json(curve.fit);
  manifest["rows"] = curve.rows.size();
  manifest["points"] = curve.points.size();

  write_atomically(path, out.str());
  write_atomically(manifest_path(path), manifest.dump(2) + "\n");
}

std::pair<RateCurve, RateStudyConfig> load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw StudyNotFoundError("rate study not found: " + path.string());
  const auto mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) throw StudyNotFoundError("rate study manifest not found: " + mpath.string());

  const auto manifest = nlohmann::json::parse(read_file(mpath));
  const int version = manifest.at("schema_version").get<int>();
  if (version != kRateSchemaVersion)
    throw std::runtime_error("unsupported rate study schema version " + std::to_string(version));
  RateStudyConfig cfg = rate_study_from_json(manifest.at("config"));
  RateCurve curve;
  curve.M = parse_double(manifest.at("M").get<std::string>());
  curve.alpha = parse_double(manifest.at("alpha").get<std::string>());
  curve.response = response_from_string(manifest.at("response").get<std::string>());
  curve.fit = fit_from_json(manifest.at("fit"));

  std::istringstream in(read_file(path));
  std::string line;
  enum { Rows, Summary } section = Rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "# summary") {
      section = Summary;
      continue;
    }
    if (line[0] == '#' || line == kRowHeader || line == kSummaryHeader) continue;
    const auto f = split(line, ',');
    if (section == Rows) {
      if (f.size() != 9) throw std::runtime_error("rate study: malformed row '" + line + "'");
      ReplicateRow r;
      r.n = std::stoi(f[0]);
      r.replicate = std::stoi(f[1]);
      r.seed = std::stoull(f[2]);
      r.ok = f[3] == "ok";
      r.tail_mass = parse_double(f[4]);
      r.mean_sq_distance = parse_double(f[5]);
      r.mean_distance = parse_double(f[6]);
      r.ball_mass = parse_double(f[7]);
      r.error = f[8];
      curve.rows.push_back(std::move(r));
    } else {
      if (f.size() != 12) throw std::runtime_error("rate study: malformed summary '" + line + "'");
      RatePoint p;
      p.n = std::stoi(f[0]);
      p.eps_n = parse_double(f[1]);
      p.replicates_ok = std::stoi(f[2]);
      p.failures = std::stoi(f[3]);
      double* targets[] = {&p.tail_mass, &p.tail_mass_se, &p.mean_sq_distance, &p.mean_sq_distance_se,
                           &p.mean_distance, &p.mean_distance_se, &p.ball_mass, &p.ball_mass_se};
      for (std::size_t i = 0; i < 8; ++i) *targets[i] = parse_double(f[4 + i]);
      curve.points.push_back(p);
    }
  }
  return {std::move(curve), std::move(cfg)};
}

int default_threads() {
  if (const char* env = std::getenv("EBRATE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0 && v <= 1024) return static_cast<int>(v);
  }
  return 1;
}

}  // namespace ebrate
