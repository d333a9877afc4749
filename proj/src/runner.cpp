#include "ebrate/runner.hpp"

#include <cmath>
#include <sstream>

#include "ebrate/numeric.hpp"
#include "ebrate/prior.hpp"
#include "ebrate/random.hpp"
#include "ebrate/sieve_mle.hpp"

namespace ebrate {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw std::invalid_argument(what); }

constexpr std::uint64_t kProbeStream = 0x70726f6265ULL;

ProbeReport base_report(const ProbeConfig& cfg, const std::string& condition) {
  ProbeReport r;
  r.condition = condition;
  r.family = cfg.family;
  r.n = cfg.n;
  return r;
}

void finish(ProbeReport& r, double n_eps2) {
  r.pass = r.bound ? r.estimate >= *r.bound - 3.0 * r.std_error : r.estimate > 0.0;
  r.implied_constant = implied_constant(r.estimate, n_eps2);
}

std::optional<EmConfig> em_for(const ProbeConfig& cfg, const Schedule& schedule, std::uint64_t seed) {
  if (!is_mixture(cfg.family)) return std::nullopt;
  return em_config_for(schedule, seed);
}

ProbeReport lp1_report(const ProbeConfig& cfg, const ModelSpec& model, const Dataset& data, const Schedule& schedule,
                       std::uint64_t seed) {
  if (!(cfg.family == Family::GaussianLocation || cfg.family == Family::Histogram ||
        cfg.family == Family::FiniteMixture))
    invalid("LP1 probe applies to single-sieve families; use LP2 for " + std::string(to_string(cfg.family)));
  const auto fit = sieve_mle(model, Dimension{schedule.S}, data, em_for(cfg, schedule, derive_seed(seed, 1)));
  const auto prior = build_prior(cfg.family, fit.point, schedule);
  const double n_eps2 = schedule.n_eps2();
  const auto est = lp1_mass(prior, model, data, fit.point, cfg.d, n_eps2, cfg.draws, seed);
  auto r = base_report(cfg, "LP1");
  r.estimate = est.estimate;
  r.std_error = est.std_error;
  if (cfg.family == Family::GaussianLocation) {
    // exact prior mass of the neighborhood
    const double erf_inv = normal_quantile(0.5 * (1.0 + std::exp(-cfg.C))) / std::sqrt(2.0);
    r.bound = std::erf(std::sqrt(cfg.d * n_eps2) * erf_inv);
  } else if (cfg.family == Family::Histogram) {
    r.bound = histogram_lp1_bound(*schedule.c, schedule.S, cfg.n, cfg.d, n_eps2);
  }
  finish(r, n_eps2);
  return r;
}

SieveIndex lp2_index(const ProbeConfig& cfg, const Schedule& schedule) {
  switch (cfg.family) {
    case Family::SparseSequence: return std::get<Subset>(truth_point(cfg).sieve);
    case Family::FixedDesignRegression: return TruncationOrder{schedule.S};
    case Family::AdaptiveMixture:
      return Dimension{std::min(schedule.S_max.value_or(1), static_cast<int>(cfg.truth.weights.size()))};
    default: invalid("LP2 probe applies to SparseSequence, FixedDesignRegression and AdaptiveMixture");
  }
}

std::vector<ProbeReport> lp2_reports(const ProbeConfig& cfg, const ModelSpec& model, const Dataset& data,
                                     const Schedule& schedule, std::uint64_t seed) {
  const SieveIndex S_star = lp2_index(cfg, schedule);
  WeightConstants k;
  k.B = schedule.B.value_or(1.0);
  k.D = schedule.D.value_or(1.0);
  k.r = schedule.r.value_or(1.5);
  const auto h = build_hierarchical_prior(model, data, schedule, k, em_for(cfg, schedule, derive_seed(seed, 1)));
  const auto res = lp2_mass(h, model, data, S_star, cfg.d, cfg.draws, seed);
  const double n_eps2 = schedule.n_eps2();

  auto w = base_report(cfg, "LP2_weight");
  w.estimate = res.weight_part;
  w.std_error = res.weight_se;
  finish(w, n_eps2);

  auto m = base_report(cfg, "LP2_mass");
  m.estimate = res.mass_part;
  m.std_error = res.mass_se;
  if (cfg.family == Family::SparseSequence)
    m.bound = sparse_ball_bound(schedule.gamma.value_or(0.1), sieve_size(S_star), cfg.d);
  finish(m, n_eps2);
  return {w, m};
}

ProbeReport gp1_report(const ProbeConfig& cfg, const ModelSpec& model, const Schedule& schedule, std::uint64_t seed) {
  if (cfg.family != Family::GaussianLocation)
    invalid("GP1 probe is evaluated for GaussianLocation only; other families rely on the analytic bound");
  const GaussianPriorBuilder builder = [&](const Dataset& d) {
    const auto fit = sieve_mle(model, Dimension{1}, d);
    return std::get<GaussianPrior>(build_prior(cfg.family, fit.point, schedule));
  };
  const auto res = gp1_integral_1d(builder, model, truth_point(cfg), cfg.p, Gp1GridCfg{}, cfg.replicates, seed);
  const double s = 1.0 / std::sqrt(cfg.n * *schedule.psi);
  const double exact = gp1_toy_exact(s, cfg.n, cfg.p, cfg.sigma);
  auto r = base_report(cfg, "GP1");
  r.estimate = res.value;
  r.bound = exact;
  r.pass = std::abs(res.value / exact - 1.0) <= 0.05 && !res.truncated;
  return r;
}

ProbeReport gamma_ratio_report(const ProbeConfig& cfg, const Schedule& schedule) {
  if (cfg.family != Family::Histogram) invalid("gamma_ratio probe applies to Histogram only");
  auto r = base_report(cfg, "gamma_ratio");
  r.estimate = log_gamma_ratio_product(*schedule.c, schedule.S, cfg.n);
  r.bound = cfg.d * schedule.n_eps2();
  r.pass = gamma_ratio_check(*schedule.c, schedule.S, cfg.n, cfg.d, schedule.n_eps2());
  return r;
}

RateStudyConfig as_study(const ProbeConfig& cfg) {
  RateStudyConfig s;
  s.family = cfg.family;
  s.kernel = cfg.kernel;
  s.sigma = cfg.sigma;
  s.beta = cfg.beta;
  s.truth = cfg.truth;
  return s;
}

}  // namespace

ParamPoint truth_point(const ProbeConfig& cfg) { return truth_point(as_study(cfg), cfg.n); }

Dataset simulate_from(const ProbeConfig& cfg) {
  const auto model = cfg.model();
  const auto seed = derive_seed(cfg.seed, 0);
  if (cfg.family == Family::Histogram) return simulate(model, LinearDensity{cfg.truth.slope}, seed);
  return simulate(model, truth_point(cfg), seed);
}

std::vector<ProbeReport> run_probes(const ProbeConfig& cfg) {
  cfg.validate();
  const auto model = cfg.model();
  const auto schedule = compute_schedule(cfg.family, cfg.n, cfg.schedule_options());
  const auto data = simulate_from(cfg);
  std::vector<ProbeReport> out;
  for (std::size_t i = 0; i < cfg.conditions.size(); ++i) {
    const auto seed = derive_seed(cfg.seed, kProbeStream, i);
    const auto& c = cfg.conditions[i];
    if (c == "LP1") out.push_back(lp1_report(cfg, model, data, schedule, seed));
    else if (c == "LP2") {
      for (auto& r : lp2_reports(cfg, model, data, schedule, seed)) out.push_back(std::move(r));
    } else if (c == "GP1") out.push_back(gp1_report(cfg, model, schedule, seed));
    else if (c == "gamma_ratio") out.push_back(gamma_ratio_report(cfg, schedule));
    else invalid("unknown condition '" + c + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------

std::optional<double> target_exponent(const RateStudyConfig& cfg, Response response) {
  if (response == Response::TailMass) return std::nullopt;
  std::optional<double> rate;
  const auto smooth = [&](double fallback) {
    return cfg.beta ? -*cfg.beta / (2.0 * *cfg.beta + 1.0) : fallback;
  };
  switch (cfg.family) {
    case Family::GaussianLocation:
    case Family::FiniteMixture: rate = -0.5; break;
    case Family::Histogram:
    case Family::FixedDesignRegression:
    case Family::AdaptiveMixture: rate = smooth(-0.5); break;
    case Family::SparseSequence: break;
  }
  if (!rate) return std::nullopt;
  return response == Response::MeanSqDistance ? 2.0 * *rate : *rate;
}

double target_tolerance(const RateStudyConfig& cfg) {
  return cfg.family == Family::GaussianLocation ? 0.15 : 0.2;
}

ReportRow report_row(const RateCurve& curve, const RateStudyConfig& cfg, const std::string& label) {
  ReportRow row;
  row.label = label;
  row.family = cfg.family;
  row.response = curve.response;
  if (!curve.points.empty()) {
    row.n_min = curve.points.front().n;
    row.n_max = curve.points.back().n;
  }
  row.M = curve.M;
  row.slope = curve.fit.slope;
  row.slope_se = curve.fit.slope_se;
  row.r2 = curve.fit.r2;
  row.target = target_exponent(cfg, curve.response);
  row.tolerance = target_tolerance(cfg);
  for (const auto& p : curve.points) row.failures += p.failures;
  const bool fitted = std::isfinite(row.slope) && curve.fit.residuals.size() >= 3;
  row.pass = fitted && (!row.target || std::abs(row.slope - *row.target) <= row.tolerance);
  return row;
}

std::string render_report(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "label,family,response,n_min,n_max,M,slope,slope_se,r2,target,tolerance,failures,status\n";
  for (const auto& r : rows) {
    out << r.label << ',' << to_string(r.family) << ',' << to_string(r.response) << ',' << r.n_min << ','
        << r.n_max << ',' << format_double(r.M) << ',' << format_double(r.slope) << ','
        << format_double(r.slope_se) << ',' << format_double(r.r2) << ','
        << (r.target ? format_double(*r.target) : std::string("n/a")) << ',' << format_double(r.tolerance) << ','
        << r.failures << ',' << (r.pass ? "PASS" : "FAIL") << "\n";
  }
  return out.str();
}

}  // namespace ebrate
