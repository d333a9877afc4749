#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ebrate/config.hpp"
#include "ebrate/log.hpp"
#include "ebrate/numeric.hpp"
#include "ebrate/posterior.hpp"
#include "ebrate/prior.hpp"
#include "ebrate/rate_lab.hpp"
#include "ebrate/runner.hpp"
#include "ebrate/sieve_mle.hpp"

using namespace ebrate;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  bool verbose = false;
  std::vector<std::string> inputs;
};

ProbeConfig load_probe(const Flags& f) {
  auto any = parse_config(f.config);
  auto* cfg = std::get_if<ProbeConfig>(&any);
  if (!cfg) throw ConfigError("this subcommand needs a config with \"kind\": \"probe\"");
  if (f.seed) cfg->seed = *f.seed;
  if (!f.out.empty()) cfg->output = f.out;
  return *cfg;
}

RateStudyConfig load_study(const Flags& f) {
  auto any = parse_config(f.config);
  auto* cfg = std::get_if<RateStudyConfig>(&any);
  if (!cfg) throw ConfigError("rate-study needs a config with \"kind\": \"rate_study\"");
  if (f.seed) cfg->seed = *f.seed;
  if (!f.out.empty()) cfg->output = f.out;
  if (f.threads) cfg->threads = *f.threads;
  else if (std::getenv("EBRATE_THREADS")) cfg->threads = default_threads();
  cfg->validate();
  return *cfg;
}

void emit_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

double posterior_alpha(const ProbeConfig& cfg) {
  if (cfg.alpha) return *cfg.alpha;
  switch (cfg.family) {
    case Family::SparseSequence:
    case Family::FixedDesignRegression:
    case Family::AdaptiveMixture: return alpha_from_p(cfg.p);
    default: return 1.0;
  }
}

nlohmann::json point_json(const ParamPoint& p) {
  nlohmann::json j;
  j["sieve"] = describe(p.sieve);
  if (!p.theta.empty()) j["theta"] = p.theta;
  if (!p.weights.empty()) j["weights"] = p.weights;
  if (!p.locations.empty()) j["locations"] = p.locations;
  if (p.precision > 0.0) j["precision"] = p.precision;
  return j;
}

int cmd_simulate(const Flags& f) {
  const auto cfg = load_probe(f);
  const auto data = simulate_from(cfg);
  std::string text = "# family=" + std::string(to_string(cfg.family)) + "\n# n=" + std::to_string(cfg.n) +
                     "\n# seed=" + std::to_string(cfg.seed) + "\n";
  text += data.design ? "index,t,x\n" : "index,x\n";
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    text += std::to_string(i) + ',';
    if (data.design) text += format_double((*data.design)[i]) + ',';
    text += format_double(data.observations[i]) + '\n';
  }
  emit_text(cfg.output, text);
  return 0;
}

int cmd_fit_mle(const Flags& f) {
  const auto cfg = load_probe(f);
  const auto model = cfg.model();
  const auto schedule = compute_schedule(cfg.family, cfg.n, cfg.schedule_options());
  const auto data = simulate_from(cfg);
  std::optional<EmConfig> em;
  if (is_mixture(cfg.family)) em = em_config_for(schedule, derive_seed(cfg.seed, 1));
  SieveIndex sieve = Dimension{schedule.S};
  if (cfg.family == Family::FixedDesignRegression) sieve = TruncationOrder{schedule.S};
  if (cfg.family == Family::SparseSequence) {
    Subset s;
    for (int i = 0; i < cfg.n; ++i) s.indices.push_back(i);
    sieve = s;
  }
  const auto fit = sieve_mle(model, sieve, data, em);
  nlohmann::json j;
  j["family"] = std::string(to_string(cfg.family));
  j["n"] = cfg.n;
  j["seed"] = cfg.seed;
  j["schedule"] = schedule.to_json();
  j["mle"] = point_json(fit.point);
  j["log_likelihood"] = fit.log_likelihood;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["floored_components"] = fit.floored_components;
  emit_text(cfg.output, j.dump(2) + "\n");
  return 0;
}

int cmd_posterior(const Flags& f) {
  const auto cfg = load_probe(f);
  const auto model = cfg.model();
  const auto schedule = compute_schedule(cfg.family, cfg.n, cfg.schedule_options());
  const auto data = simulate_from(cfg);
  const double alpha = posterior_alpha(cfg);
  const auto post_seed = derive_seed(cfg.seed, 2);
  std::optional<EmConfig> em;
  if (is_mixture(cfg.family)) em = em_config_for(schedule, derive_seed(cfg.seed, 1));

  SampleBag bag;
  bag.seed = post_seed;
  switch (cfg.family) {
    case Family::GaussianLocation:
    case Family::Histogram: {
      const auto fit = sieve_mle(model, Dimension{schedule.S}, data);
      const auto prior = build_prior(cfg.family, fit.point, schedule);
      PosteriorRep rep = cfg.family == Family::GaussianLocation
                             ? PosteriorRep(posterior_gaussian_location(std::get<GaussianPrior>(prior), model, data, alpha))
                             : PosteriorRep(posterior_histogram(std::get<DirichletPrior>(prior),
                                                                bin_counts(data.observations, schedule.S), alpha));
      bag.draws = posterior_draws(rep, cfg.draws, post_seed);
      break;
    }
    case Family::SparseSequence: {
      SparseSamplerCfg sc;
      sc.mode = cfg.n <= kMaxEnumerationN ? SparseMode::ExactEnumeration : SparseMode::Gibbs;
      sc.seed = post_seed;
      sc.sweeps = std::max(2000, 2 * cfg.draws);
      sc.max_draws = cfg.draws;
      const auto rep = posterior_sparse_mean(data, WeightConstants{schedule.B.value_or(1.0)},
                                             schedule.gamma.value_or(0.1), alpha, sc);
      if (const auto* b = std::get_if<SampleBag>(&rep)) bag = *b;
      else bag.draws = posterior_draws(rep, cfg.draws, post_seed);
      break;
    }
    case Family::FixedDesignRegression: {
      const auto rep = posterior_regression(data, WeightConstants{schedule.B.value_or(1.0)},
                                            schedule.gamma.value_or(0.1), alpha, schedule.S_max.value_or(1),
                                            cfg.sigma);
      bag.draws = posterior_draws(rep, cfg.draws, post_seed);
      break;
    }
    case Family::FiniteMixture:
    case Family::AdaptiveMixture: {
      EmpiricalPrior prior;
      if (cfg.family == Family::AdaptiveMixture) {
        WeightConstants k;
        k.D = schedule.D.value_or(1.0);
        k.r = schedule.r.value_or(1.5);
        prior = build_hierarchical_prior(model, data, schedule, k, em);
      } else {
        prior = build_prior(cfg.family, sieve_mle(model, Dimension{schedule.S}, data, em).point, schedule);
      }
      const int draws = std::max(1000, cfg.draws);
      bag = posterior_mixture_mh(model, data, prior, alpha, post_seed, draws, draws / 2);
      break;
    }
  }
  std::cerr << "posterior: alpha=" << format_double(alpha) << " p=" << format_double(cfg.p)
            << " draws=" << bag.draws.size() << " acceptance=" << format_double(bag.diagnostics.acceptance_rate)
            << "\n";
  if (cfg.output.empty()) throw std::invalid_argument("posterior needs --out or an 'output' config key");
  write_sample_bag(bag, cfg.output);
  return 0;
}

int cmd_probe(const Flags& f) {
  const auto cfg = load_probe(f);
  const auto reports = run_probes(cfg);
  nlohmann::json j;
  j["family"] = std::string(to_string(cfg.family));
  j["n"] = cfg.n;
  j["p"] = cfg.p;
  j["alpha"] = posterior_alpha(cfg);
  j["seed"] = cfg.seed;
  j["note"] = "finite-n evidence only";
  j["reports"] = nlohmann::json::array();
  bool all = true;
  for (const auto& r : reports) {
    j["reports"].push_back(r.to_json());
    all = all && r.pass;
  }
  emit_text(cfg.output, j.dump(2) + "\n");
  return all ? 0 : 1;
}

int cmd_rate_study(const Flags& f) {
  const auto cfg = load_study(f);
  if (cfg.output.empty()) throw std::invalid_argument("rate-study needs --out or an 'output' config key");
  const auto curve = run_rate_study(cfg);
  persist(curve, cfg, cfg.output);
  std::cout << "alpha=" << format_double(curve.alpha) << " M=" << format_double(curve.M) << "\n";
  std::cout << render_report({report_row(curve, cfg, cfg.output)});
  return 0;
}

int cmd_report(const Flags& f) {
  std::vector<ReportRow> rows;
  for (const auto& path : f.inputs) {
    const auto [curve, cfg] = load(path);
    rows.push_back(report_row(curve, cfg, path));
  }
  emit_text(f.out, render_report(rows));
  for (const auto& r : rows)
    if (!r.pass) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical-prior posterior concentration toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_flag("--verbose,-v", f.verbose, "Print warnings and progress to stderr");

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    sub->add_option("--seed", f.seed, "Master seed (overrides the config)");
    sub->add_option("--out", f.out, "Output path (overrides the config)");
    sub->add_option("--threads", f.threads, "Worker threads (default: EBRATE_THREADS or 1)")
        ->check(CLI::PositiveNumber);
  };

  auto* sim = app.add_subcommand("simulate", "Draw a dataset from the configured truth");
  add_common(sim, true);
  auto* fit = app.add_subcommand("fit-mle", "Sieve maximum-likelihood fit at the scheduled sieve");
  add_common(fit, true);
  auto* post = app.add_subcommand("posterior", "Posterior draws to a columnar file");
  add_common(post, true);
  auto* probe = app.add_subcommand("probe-conditions", "Finite-n condition probes as JSON records");
  add_common(probe, true);
  auto* study = app.add_subcommand("rate-study", "Replicate study over an n-grid");
  add_common(study, true);
  auto* report = app.add_subcommand("report", "Fitted vs target exponents for saved studies");
  add_common(report, false);
  report->add_option("studies", f.inputs, "Study CSV files")->required();

  CLI11_PARSE(app, argc, argv);
  set_verbose(f.verbose);
  try {
    if (sim->parsed()) return cmd_simulate(f);
    if (fit->parsed()) return cmd_fit_mle(f);
    if (post->parsed()) return cmd_posterior(f);
    if (probe->parsed()) return cmd_probe(f);
    if (study->parsed()) return cmd_rate_study(f);
    if (report->parsed()) return cmd_report(f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
