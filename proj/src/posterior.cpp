#include "ebrate/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "ebrate/log.hpp"
#include "ebrate/numeric.hpp"

namespace ebrate {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

ParamPoint point_from_vector(Family family, const SieveIndex& sieve, int ambient, std::vector<double> v) {
  switch (family) {
    case Family::GaussianLocation: return ParamPoint::location(v.at(0));
    case Family::SparseSequence: return ParamPoint::sparse(ambient, std::get<Subset>(sieve).indices, v);
    case Family::FixedDesignRegression: return ParamPoint::regression(std::move(v));
    default: invalid("ExactGaussian: unsupported family");
  }
}

}  // namespace

double alpha_from_p(double p) {
  if (!(p > 1.0)) invalid("alpha_from_p: p must exceed 1, got " + std::to_string(p));
  return 0.5 * (1.0 - 1.0 / p);
}

FractionCfg FractionCfg::from_p(double p) { return {p, alpha_from_p(p)}; }
FractionCfg FractionCfg::full() { return {std::numeric_limits<double>::infinity(), 1.0}; }

ExactGaussian ExactGaussian::make(Family family, SieveIndex sieve, int ambient, Eigen::VectorXd mean,
                                  Eigen::MatrixXd covariance) {
  ExactGaussian g;
  g.family = family;
  g.sieve = std::move(sieve);
  g.ambient = ambient;
  g.mean = std::move(mean);
  g.covariance = std::move(covariance);
  if (g.mean.size() > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(g.covariance);
    if (llt.info() != Eigen::Success) invalid("ExactGaussian: covariance not positive definite");
    g.cov_chol = llt.matrixL();
  }
  return g;
}

ParamPoint sample_exact_gaussian(const ExactGaussian& g, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd xi(g.mean.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = gauss(rng);
  const Eigen::VectorXd x = g.mean + g.cov_chol * xi;
  return point_from_vector(g.family, g.sieve, g.ambient, {x.data(), x.data() + x.size()});
}

std::size_t sample_index(const std::vector<double>& log_weights, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    acc += std::exp(log_weights[i]);
    if (u < acc) return i;
  }
  // rounding slack: last index with positive weight
  for (std::size_t i = log_weights.size(); i-- > 0;)
    if (log_weights[i] > kNegInf) return i;
  return 0;
}

// ---------------------------------------------------------------------------

ExactGaussian posterior_gaussian_location(const GaussianPrior& prior, const ModelSpec& model,
                                          const Dataset& data, double alpha) {
  if (model.family != Family::GaussianLocation || prior.family != Family::GaussianLocation)
    invalid("posterior_gaussian_location: GaussianLocation family only");
  if (!(alpha > 0.0 && alpha <= 1.0)) invalid("posterior_gaussian_location: alpha must lie in (0, 1]");
  validate_dataset(model, data);
  const double n = model.n;
  const double xbar =
      std::accumulate(data.observations.begin(), data.observations.end(), 0.0) / n;
  const double prior_prec = 1.0 / prior.cov.scale;
  const double like_prec = alpha * n / (model.sigma * model.sigma);
  const double prec = prior_prec + like_prec;
  const double mean = (prior_prec * prior.mean(0) + like_prec * xbar) / prec;
  return ExactGaussian::make(Family::GaussianLocation, Dimension{1}, 1, Eigen::VectorXd::Constant(1, mean),
                             Eigen::MatrixXd::Constant(1, 1, 1.0 / prec));
}

ExactDirichlet posterior_histogram(const DirichletPrior& prior, const std::vector<int>& counts, double alpha) {
  if (counts.size() != prior.alpha.size()) invalid("posterior_histogram: counts length must equal S");
  if (!(alpha > 0.0 && alpha <= 1.0)) invalid("posterior_histogram: alpha must lie in (0, 1]");
  ExactDirichlet post{prior.alpha};
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (counts[s] < 0) invalid("posterior_histogram: negative count");
    post.alpha[s] += alpha * counts[s];
  }
  return post;
}

// ---------------------------------------------------------------------------
// Sparse normal means

PosteriorRep posterior_sparse_mean(const Dataset& data, const WeightConstants& weights, double gamma,
                                   double alpha, const SparseSamplerCfg& cfg) {
  const auto& x = data.observations;
  const int n = static_cast<int>(x.size());
  if (n < 1) invalid("posterior_sparse_mean: empty data");
  if (!(gamma > 0.0 && gamma < 1.0)) invalid("posterior_sparse_mean: gamma must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha <= 1.0)) invalid("posterior_sparse_mean: alpha must lie in (0, 1]");
  if (!(weights.B > 0.0)) invalid("posterior_sparse_mean: B must be positive");
  const double half_log_shrink = 0.5 * std::log(gamma / (gamma + alpha));
  const double cond_var = 1.0 / (alpha + gamma);

  if (cfg.mode == SparseMode::ExactEnumeration) {
    if (n > kMaxEnumerationN)
      invalid("posterior_sparse_mean: exact enumeration requires n <= " + std::to_string(kMaxEnumerationN));
    IndexEnumeration post;
    const std::uint32_t total = 1u << n;
    post.indices.reserve(total);
    post.log_weights.reserve(total);
    for (std::uint32_t mask = 0; mask < total; ++mask) {
      std::vector<int> idx;
      double signal = 0.0;
      for (int i = 0; i < n; ++i)
        if (mask & (1u << i)) {
          idx.push_back(i);
          signal += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        }
      const int k = static_cast<int>(idx.size());
      post.log_weights.push_back(-log_choose(n, k) - weights.B * k + k * half_log_shrink +
                                 0.5 * alpha * signal);
      post.indices.emplace_back(Subset{std::move(idx)});
    }
    const double z = log_sum_exp(post.log_weights);
    for (auto& v : post.log_weights) v -= z;
    auto indices = std::make_shared<const std::vector<SieveIndex>>(post.indices);
    auto obs = std::make_shared<const std::vector<double>>(x);
    post.conditional = [indices, obs, cond_var, n](std::size_t i) {
      const auto& subset = std::get<Subset>((*indices)[i]);
      const auto k = static_cast<Eigen::Index>(subset.indices.size());
      Eigen::VectorXd mean(k);
      for (Eigen::Index j = 0; j < k; ++j)
        mean(j) = (*obs)[static_cast<std::size_t>(subset.indices[static_cast<std::size_t>(j)])];
      return ExactGaussian::make(Family::SparseSequence, subset, n, std::move(mean),
                                 cond_var * Eigen::MatrixXd::Identity(k, k));
    };
    return post;
  }

  if (cfg.sweeps < 100) log_warning("posterior_sparse_mean: fewer than 100 sweeps requested");
  if (cfg.sweeps < 1) invalid("posterior_sparse_mean: sweeps must be positive");
  const int burn = cfg.burn_in >= 0 ? cfg.burn_in : cfg.sweeps / 10;
  const int kept_sweeps = cfg.sweeps - burn;
  if (kept_sweeps < 1) invalid("posterior_sparse_mean: burn_in must be below sweeps");
  const int thin = std::max(1, (kept_sweeps + cfg.max_draws - 1) / std::max(1, cfg.max_draws));

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd = std::sqrt(cond_var);
  std::vector<double> base(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    base[static_cast<std::size_t>(i)] =
        half_log_shrink - weights.B + 0.5 * alpha * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];

  std::vector<char> z(static_cast<std::size_t>(n), 0);
  int k = 0;
  std::vector<std::vector<double>> rb(static_cast<std::size_t>(n));
  for (auto& series : rb) series.reserve(static_cast<std::size_t>(kept_sweeps));

  SampleBag bag;
  bag.seed = cfg.seed;
  ModelSpec model = ModelSpec::sparse_sequence(n);
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    const bool keep = sweep >= burn;
    for (int i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const int rest = k - z[iu];
      const double log_odds = base[iu] - std::log(static_cast<double>(n - rest) / (rest + 1.0));
      const double p = 1.0 / (1.0 + std::exp(-log_odds));
      if (keep) rb[iu].push_back(p);
      const char next = unif(rng) < p ? 1 : 0;
      k += next - z[iu];
      z[iu] = next;
    }
    if (keep && (sweep - burn) % thin == 0) {
      std::vector<int> idx;
      std::vector<double> vals;
      for (int i = 0; i < n; ++i)
        if (z[static_cast<std::size_t>(i)]) {
          idx.push_back(i);
          vals.push_back(x[static_cast<std::size_t>(i)] + sd * gauss(rng));
        }
      bag.draws.push_back(ParamPoint::sparse(n, std::move(idx), vals));
      bag.diagnostics.log_lik_trace.push_back(log_likelihood(model, bag.draws.back(), data));
    }
  }
  bag.diagnostics.acceptance_rate = 1.0;
  bag.diagnostics.sweeps = cfg.sweeps;
  bag.diagnostics.burn_in = burn;
  for (const auto& series : rb) {
    bag.diagnostics.inclusion_prob.push_back(mean_and_se(series).mean);
    bag.diagnostics.inclusion_se.push_back(batch_means_se(series));
  }
  return bag;
}

std::vector<double> inclusion_probabilities(const IndexEnumeration& post, int n) {
  std::vector<double> incl(static_cast<std::size_t>(n), 0.0);
  for (std::size_t j = 0; j < post.indices.size(); ++j) {
    const auto* subset = std::get_if<Subset>(&post.indices[j]);
    if (!subset) invalid("inclusion_probabilities: subset enumeration required");
    const double w = std::exp(post.log_weights[j]);
    for (int i : subset->indices) incl[static_cast<std::size_t>(i)] += w;
  }
  return incl;
}

// ---------------------------------------------------------------------------
// Regression

Eigen::VectorXd RegressionPosteriorState::whitened_draw(int order, Rng& rng) const {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(design->columns);
  const double sd = 1.0 / std::sqrt(shrink);
  for (int j = 0; j < order; ++j) w(j) = fits.z(j) + sd * gauss(rng);
  return w;
}

std::vector<double> RegressionPosteriorState::coefficient_draw(int order, Rng& rng) const {
  const Eigen::VectorXd w = whitened_draw(order, rng).head(order);
  const auto L = design->chol.topLeftCorner(order, order);
  const Eigen::VectorXd theta = L.transpose().triangularView<Eigen::Upper>().solve(w);
  return {theta.data(), theta.data() + theta.size()};
}

IndexEnumeration posterior_regression(const Dataset& data, const WeightConstants& weights, double gamma,
                                      double alpha, int S_max, double sigma) {
  const int n = static_cast<int>(data.observations.size());
  if (S_max < 1 || S_max > n) invalid("posterior_regression: S_max must lie in 1..n");
  return posterior_regression(data, std::make_shared<const FourierDesign>(FourierDesign::make(n, S_max)),
                              weights, gamma, alpha, S_max, sigma);
}

IndexEnumeration posterior_regression(const Dataset& data, std::shared_ptr<const FourierDesign> design,
                                      const WeightConstants& weights, double gamma, double alpha,
                                      int S_max, double sigma) {
  if (!data.design) invalid("posterior_regression: design points required");
  const int n = static_cast<int>(data.observations.size());
  if (S_max < 1 || S_max > n) invalid("posterior_regression: S_max must lie in 1..n");
  if (!design || design->n != n || design->columns < S_max)
    invalid("posterior_regression: cached design does not match data");
  if (!(gamma > 0.0 && gamma < 1.0)) invalid("posterior_regression: gamma must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha <= 1.0)) invalid("posterior_regression: alpha must lie in (0, 1]");
  if (!(sigma > 0.0)) invalid("posterior_regression: sigma must be positive");

  auto state = std::make_shared<RegressionPosteriorState>();
  state->design = design;
  state->fits = nested_least_squares(*design, data.observations);
  state->shrink = alpha / (sigma * sigma) + gamma;
  state->sigma = sigma;
  const double half_log_shrink = 0.5 * std::log(gamma / state->shrink);

  IndexEnumeration post;
  for (int S = 1; S <= S_max; ++S) {
    post.indices.emplace_back(TruncationOrder{S});
    post.log_weights.push_back(log_model_weight(WeightScheme::TruncationOrder, TruncationOrder{S}, n, weights) -
                               alpha * state->fits.rss(S) / (2.0 * sigma * sigma) + S * half_log_shrink);
  }
  const double z = log_sum_exp(post.log_weights);
  for (auto& v : post.log_weights) v -= z;
  std::shared_ptr<const RegressionPosteriorState> cstate = state;
  post.conditional = [cstate](std::size_t i) {
    const int order = static_cast<int>(i) + 1;
    const auto L = cstate->design->chol.topLeftCorner(order, order);
    const Eigen::MatrixXd gram = L * L.transpose();
    Eigen::MatrixXd cov = gram.llt().solve(Eigen::MatrixXd::Identity(order, order)) / cstate->shrink;
    return ExactGaussian::make(Family::FixedDesignRegression, TruncationOrder{order}, order,
                               cstate->fits.coefficients(order), std::move(cov));
  };
  post.regression = cstate;
  return post;
}

// ---------------------------------------------------------------------------
// Mixtures

double independence_mh_log_ratio(double alpha, double ll_cur, double ll_prop, double log_prior_cur,
                                 double log_prior_prop, double log_q_cur, double log_q_prop) {
  return alpha * (ll_prop - ll_cur) + ((log_prior_prop - log_prior_cur) - (log_q_prop - log_q_cur));
}

SampleBag posterior_mixture_mh(const ModelSpec& model, const Dataset& data, const EmpiricalPrior& prior,
                               double alpha, std::uint64_t seed, int draws, int burn_in) {
  if (!is_mixture(model.family)) invalid("posterior_mixture_mh: mixture family required");
  if (!std::holds_alternative<MixtureParamPrior>(prior) && !std::holds_alternative<HierarchicalPrior>(prior))
    invalid("posterior_mixture_mh: prior must be a mixture parameter prior or a hierarchical prior");
  if (draws < 1000) invalid("posterior_mixture_mh: draws must be at least 1000");
  if (burn_in < 0) invalid("posterior_mixture_mh: burn_in must be non-negative");
  if (!(alpha > 0.0 && alpha <= 1.0)) invalid("posterior_mixture_mh: alpha must lie in (0, 1]");
  validate_dataset(model, data);

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ParamPoint cur = sample_prior(prior, rng);
  double ll_cur = log_likelihood(model, cur, data);
  SampleBag bag;
  bag.seed = seed;
  bag.draws.reserve(static_cast<std::size_t>(draws));
  long accepted = 0;
  for (int t = 0; t < burn_in + draws; ++t) {
    ParamPoint prop = sample_prior(prior, rng);
    const double ll_prop = log_likelihood(model, prop, data);
    // prior and proposal densities coincide, so only the tempered likelihood ratio remains
    const double log_ratio = alpha * (ll_prop - ll_cur);
    const bool accept = ll_cur == kNegInf || std::log(unif(rng)) < log_ratio;
    if (accept) {
      cur = std::move(prop);
      ll_cur = ll_prop;
    }
    if (t >= burn_in) {
      accepted += accept ? 1 : 0;
      bag.draws.push_back(cur);
      bag.diagnostics.log_lik_trace.push_back(ll_cur);
    }
  }
  bag.diagnostics.sweeps = burn_in + draws;
  bag.diagnostics.burn_in = burn_in;
  bag.diagnostics.acceptance_rate = static_cast<double>(accepted) / draws;
  if (accepted == 0)
    throw ZeroAcceptanceError("posterior_mixture_mh: no proposal accepted after burn-in; "
                              "the prior or schedule is likely misconfigured",
                              bag.diagnostics);
  return bag;
}

// ---------------------------------------------------------------------------

std::vector<ParamPoint> posterior_draws(const PosteriorRep& post, int count, std::uint64_t seed) {
  if (const auto* bag = std::get_if<SampleBag>(&post)) return bag->draws;
  if (count < 1) invalid("posterior_draws: count must be positive");
  Rng rng(seed);
  std::vector<ParamPoint> out;
  out.reserve(static_cast<std::size_t>(count));
  if (const auto* g = std::get_if<ExactGaussian>(&post)) {
    for (int i = 0; i < count; ++i) out.push_back(sample_exact_gaussian(*g, rng));
  } else if (const auto* d = std::get_if<ExactDirichlet>(&post)) {
    for (int i = 0; i < count; ++i) out.push_back(ParamPoint::histogram(sample_dirichlet(d->alpha, rng)));
  } else {
    const auto& e = std::get<IndexEnumeration>(post);
    std::map<std::size_t, ExactGaussian> cache;
    for (int i = 0; i < count; ++i) {
      const std::size_t j = sample_index(e.log_weights, rng);
      if (e.regression) {
        out.push_back(ParamPoint::regression(e.regression->coefficient_draw(static_cast<int>(j) + 1, rng)));
        continue;
      }
      auto it = cache.find(j);
      if (it == cache.end()) it = cache.emplace(j, e.conditional(j)).first;
      out.push_back(sample_exact_gaussian(it->second, rng));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Columnar files

namespace {

std::string encode_sieve(const SieveIndex& s) {
  if (const auto* d = std::get_if<Dimension>(&s)) return "D" + std::to_string(d->size);
  if (const auto* t = std::get_if<TruncationOrder>(&s)) return "T" + std::to_string(t->order);
  std::string out = "S";
  const auto& idx = std::get<Subset>(s).indices;
  for (std::size_t i = 0; i < idx.size(); ++i) out += (i ? ";" : "") + std::to_string(idx[i]);
  return out;
}

SieveIndex decode_sieve(const std::string& text) {
  if (text.empty()) invalid("sample file: empty sieve cell");
  const std::string body = text.substr(1);
  if (text[0] == 'D') return Dimension{std::stoi(body)};
  if (text[0] == 'T') return TruncationOrder{std::stoi(body)};
  if (text[0] != 'S') invalid("sample file: bad sieve cell '" + text + "'");
  Subset s;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ';'))
    if (!item.empty()) s.indices.push_back(std::stoi(item));
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

void append_column(std::vector<double>& target, const std::string& cell) {
  if (!cell.empty()) target.push_back(parse_double(cell));
}

}  // namespace

void write_sample_bag(const SampleBag& bag, const std::filesystem::path& path) {
  std::size_t K = 0, T = 0;
  bool has_precision = false;
  for (const auto& d : bag.draws) {
    K = std::max({K, d.weights.size(), d.locations.size()});
    T = std::max(T, d.theta.size());
    has_precision = has_precision || d.precision != 0.0;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "# ebrate sample bag v1\n";
  out << "# seed=" << bag.seed << "\n";
  out << "# acceptance_rate=" << format_double(bag.diagnostics.acceptance_rate) << "\n";
  out << "# sweeps=" << bag.diagnostics.sweeps << "\n";
  out << "# burn_in=" << bag.diagnostics.burn_in << "\n";
  out << "sieve";
  for (std::size_t s = 1; s <= K; ++s) out << ",w_" << s;
  for (std::size_t s = 1; s <= K; ++s) out << ",mu_" << s;
  if (has_precision) out << ",lambda";
  for (std::size_t j = 1; j <= T; ++j) out << ",theta_" << j;
  out << "\n";
  for (const auto& d : bag.draws) {
    out << encode_sieve(d.sieve);
    for (std::size_t s = 0; s < K; ++s) out << ',' << (s < d.weights.size() ? format_double(d.weights[s]) : "");
    for (std::size_t s = 0; s < K; ++s)
      out << ',' << (s < d.locations.size() ? format_double(d.locations[s]) : "");
    if (has_precision) out << ',' << format_double(d.precision);
    for (std::size_t j = 0; j < T; ++j) out << ',' << (j < d.theta.size() ? format_double(d.theta[j]) : "");
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

SampleBag read_sample_bag(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("sample file not found: '" + path.string() + "'");
  SampleBag bag;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string value = line.substr(eq + 1);
      if (key == "seed") bag.seed = std::stoull(value);
      else if (key == "acceptance_rate") bag.diagnostics.acceptance_rate = parse_double(value);
      else if (key == "sweeps") bag.diagnostics.sweeps = std::stoi(value);
      else if (key == "burn_in") bag.diagnostics.burn_in = std::stoi(value);
      continue;
    }
    if (header.empty()) {
      header = split(line, ',');
      if (header.empty() || header[0] != "sieve") invalid("sample file: missing header");
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) invalid("sample file: ragged row");
    ParamPoint p;
    p.sieve = decode_sieve(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto& name = header[c];
      if (name.rfind("w_", 0) == 0) append_column(p.weights, cells[c]);
      else if (name.rfind("mu_", 0) == 0) append_column(p.locations, cells[c]);
      else if (name == "lambda") p.precision = parse_double(cells[c]);
      else if (name.rfind("theta_", 0) == 0) append_column(p.theta, cells[c]);
      else invalid("sample file: unknown column '" + name + "'");
    }
    bag.draws.push_back(std::move(p));
  }
  if (header.empty()) invalid("sample file: missing header");
  return bag;
}

}  // namespace ebrate
