#include "ebrate/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ebrate {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

const std::vector<std::string> kTruthKeys{"truth_location", "truth_slope",     "s_star",         "signal",
                                          "truth_terms",    "truth_weights",   "truth_locations", "truth_precision"};

const std::vector<std::string> kStudyKeys{
    "kind",     "family",      "kernel",       "sigma",     "beta",        "b",
    "gamma",    "B",           "S_max",        "C",         "n_grid",      "replicates",
    "draws",    "M",           "calibration",  "M_candidates", "calibration_target", "pilot_replicates",
    "p",        "alpha",       "response",     "seed",      "output",      "threads"};

const std::vector<std::string> kProbeKeys{"kind",  "family", "kernel", "sigma", "n",          "beta",
                                          "b",     "gamma",  "B",      "S_max", "C",          "d",
                                          "draws", "replicates", "p",  "alpha", "conditions", "seed",
                                          "output"};

std::vector<std::string> with_truth(std::vector<std::string> keys) {
  keys.insert(keys.end(), kTruthKeys.begin(), kTruthKeys.end());
  return keys;
}

void check_keys(const json& j, const std::vector<std::string>& known) {
  if (!j.is_object()) fail("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) != known.end()) continue;
    std::string msg = "unknown config key '" + key + "'";
    if (const auto s = suggest_key(key, known)) msg += " (did you mean '" + *s + "'?)";
    fail(msg);
  }
}

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

double as_double(const json& v, const char* key) {
  if (!v.is_number()) fail(std::string("config key '") + key + "' must be a number");
  return v.get<double>();
}

int as_int(const json& v, const char* key) {
  if (!v.is_number_integer()) fail(std::string("config key '") + key + "' must be an integer");
  const auto x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    fail(std::string("config key '") + key + "' is out of the integer range");
  return static_cast<int>(x);
}

std::string as_string(const json& v, const char* key) {
  if (!v.is_string()) fail(std::string("config key '") + key + "' must be a string");
  return v.get<std::string>();
}

template <class T, class F>
std::vector<T> as_list(const json& v, const char* key, F&& item) {
  if (!v.is_array()) fail(std::string("config key '") + key + "' must be an array");
  std::vector<T> out;
  for (const auto& x : v) out.push_back(item(x, key));
  return out;
}

void read(const json& j, const char* key, double& out) {
  if (const auto* v = find(j, key)) out = as_double(*v, key);
}
void read(const json& j, const char* key, std::optional<double>& out) {
  if (const auto* v = find(j, key)) out = as_double(*v, key);
}
void read(const json& j, const char* key, int& out) {
  if (const auto* v = find(j, key)) out = as_int(*v, key);
}
void read(const json& j, const char* key, std::optional<int>& out) {
  if (const auto* v = find(j, key)) out = as_int(*v, key);
}
void read(const json& j, const char* key, std::string& out) {
  if (const auto* v = find(j, key)) out = as_string(*v, key);
}
void read(const json& j, const char* key, std::vector<double>& out) {
  if (const auto* v = find(j, key)) out = as_list<double>(*v, key, as_double);
}
void read(const json& j, const char* key, std::vector<int>& out) {
  if (const auto* v = find(j, key)) out = as_list<int>(*v, key, as_int);
}
void read(const json& j, const char* key, std::vector<std::string>& out) {
  if (const auto* v = find(j, key)) out = as_list<std::string>(*v, key, as_string);
}
void read_seed(const json& j, std::uint64_t& out) {
  const auto* v = find(j, "seed");
  if (!v) return;
  if (v->is_number_unsigned()) out = v->get<std::uint64_t>();
  else if (v->is_number_integer() && v->get<long long>() >= 0) out = static_cast<std::uint64_t>(v->get<long long>());
  else fail("config key 'seed' must be a non-negative 64-bit integer");
}

template <class E, class F>
void read_enum(const json& j, const char* key, E& out, F&& parse) {
  if (const auto* v = find(j, key)) {
    try {
      out = parse(as_string(*v, key));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(std::string("config key '") + key + "': " + e.what());
    }
  }
}

Family read_family(const json& j) {
  Family f = Family::GaussianLocation;
  if (!find(j, "family")) fail("config key 'family' is required");
  read_enum(j, "family", f, family_from_string);
  return f;
}

std::optional<Kernel> read_kernel(const json& j, Family family) {
  std::optional<Kernel> k;
  if (find(j, "kernel")) {
    Kernel v = Kernel::Normal;
    read_enum(j, "kernel", v, kernel_from_string);
    k = v;
  }
  if (family == Family::FiniteMixture && !k) k = Kernel::Normal;
  return k;
}

void read_truth(const json& j, TruthCfg& t) {
  read(j, "truth_location", t.location);
  read(j, "truth_slope", t.slope);
  read(j, "s_star", t.s_star);
  read(j, "signal", t.signal);
  read(j, "truth_terms", t.terms);
  read(j, "truth_weights", t.weights);
  read(j, "truth_locations", t.locations);
  read(j, "truth_precision", t.precision);
}

void write_truth(json& j, const TruthCfg& t) {
  j["truth_location"] = t.location;
  j["truth_slope"] = t.slope;
  j["s_star"] = t.s_star;
  j["signal"] = t.signal;
  j["truth_terms"] = t.terms;
  j["truth_weights"] = t.weights;
  j["truth_locations"] = t.locations;
  j["truth_precision"] = t.precision;
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class F>
void validated(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    fail(std::string("invalid config: ") + e.what());
  }
}

std::string kind_of(const json& j) {
  if (!j.is_object()) fail("config must be a JSON object");
  std::string kind = "rate_study";
  read(j, "kind", kind);
  if (kind != "rate_study" && kind != "probe")
    fail("config key 'kind' must be 'rate_study' or 'probe', got '" + kind + "'");
  return kind;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::optional<std::string> suggest_key(std::string_view key, const std::vector<std::string>& known) {
  std::optional<std::string> best;
  std::size_t best_d = 3;
  for (const auto& k : known) {
    const auto d = edit_distance(key, k);
    if (d < best_d) best_d = d, best = k;
  }
  return best;
}

void ProbeConfig::validate() const {
  if (n < 3)
    throw std::invalid_argument("n must be at least 3, got " + std::to_string(n));
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!(d > 0.0)) throw std::invalid_argument("d must be positive");
  if (!(C > 0.0)) throw std::invalid_argument("C must be positive");
  if (draws < 1) throw std::invalid_argument("draws must be positive");
  if (replicates < 1) throw std::invalid_argument("replicates must be positive");
  if (!(p > 1.0)) throw std::invalid_argument("p must exceed 1");
  if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  for (const auto& c : conditions)
    if (c != "LP1" && c != "LP2" && c != "GP1" && c != "gamma_ratio")
      throw std::invalid_argument("conditions entries must be LP1, LP2, GP1 or gamma_ratio, got '" + c + "'");
  if (family == Family::SparseSequence && (truth.s_star < 0 || truth.s_star >= n))
    throw std::invalid_argument("s_star must lie in [0, n)");
  if (family == Family::Histogram && !(std::abs(truth.slope) < 1.0))
    throw std::invalid_argument("truth_slope must lie in (-1, 1)");
  model().validate();
  compute_schedule(family, n, schedule_options());
}

ModelSpec ProbeConfig::model() const {
  switch (family) {
    case Family::GaussianLocation: return ModelSpec::gaussian_location(n, sigma);
    case Family::Histogram: return ModelSpec::histogram(n);
    case Family::FiniteMixture: return ModelSpec::finite_mixture(n, kernel.value_or(Kernel::Normal), sigma);
    case Family::SparseSequence: return ModelSpec::sparse_sequence(n);
    case Family::FixedDesignRegression: return ModelSpec::regression(n, sigma);
    case Family::AdaptiveMixture: return ModelSpec::adaptive_mixture(n);
  }
  throw std::invalid_argument("unknown family");
}

ScheduleOptions ProbeConfig::schedule_options() const {
  ScheduleOptions o;
  o.beta = beta;
  o.b = b;
  o.gamma = gamma;
  o.B = B;
  o.S_max = S_max;
  o.sigma = family == Family::SparseSequence ? 1.0 : sigma;
  o.C = C;
  o.d = d;
  if (family == Family::SparseSequence) o.s_star = truth.s_star;
  return o;
}

// ---------------------------------------------------------------------------

RateStudyConfig rate_study_from_json(const json& j) {
  check_keys(j, with_truth(kStudyKeys));
  if (kind_of(j) != "rate_study") fail("config key 'kind' must be 'rate_study' here");
  RateStudyConfig c;
  c.family = read_family(j);
  c.kernel = read_kernel(j, c.family);
  read(j, "sigma", c.sigma);
  read(j, "beta", c.beta);
  read(j, "b", c.b);
  read(j, "gamma", c.gamma);
  read(j, "B", c.B);
  read(j, "S_max", c.S_max);
  read(j, "C", c.C);
  if (!find(j, "n_grid")) fail("config key 'n_grid' is required");
  read(j, "n_grid", c.n_grid);
  read(j, "replicates", c.replicates);
  read(j, "draws", c.draws);
  read(j, "M", c.M);
  read_enum(j, "calibration", c.calibration, calibration_from_string);
  if (c.calibration == Calibration::BallMass && !find(j, "calibration_target")) c.calibration_target = 0.9;
  if (c.calibration == Calibration::BallMass && !find(j, "M_candidates")) c.M_candidates = {1, 2, 4, 8, 16};
  read(j, "M_candidates", c.M_candidates);
  read(j, "calibration_target", c.calibration_target);
  read(j, "pilot_replicates", c.pilot_replicates);
  read(j, "p", c.p);
  read(j, "alpha", c.alpha);
  read_enum(j, "response", c.response, response_from_string);
  read_seed(j, c.seed);
  read(j, "output", c.output);
  read(j, "threads", c.threads);
  read_truth(j, c.truth);
  validated([&] { c.validate(); });
  return c;
}

ProbeConfig probe_config_from_json(const json& j) {
  check_keys(j, with_truth(kProbeKeys));
  if (kind_of(j) != "probe") fail("config key 'kind' must be 'probe' here");
  ProbeConfig c;
  c.family = read_family(j);
  c.kernel = read_kernel(j, c.family);
  read(j, "sigma", c.sigma);
  read(j, "n", c.n);
  read(j, "beta", c.beta);
  read(j, "b", c.b);
  read(j, "gamma", c.gamma);
  read(j, "B", c.B);
  read(j, "S_max", c.S_max);
  read(j, "C", c.C);
  read(j, "d", c.d);
  read(j, "draws", c.draws);
  read(j, "replicates", c.replicates);
  read(j, "p", c.p);
  read(j, "alpha", c.alpha);
  read(j, "conditions", c.conditions);
  read_seed(j, c.seed);
  read(j, "output", c.output);
  read_truth(j, c.truth);
  validated([&] { c.validate(); });
  return c;
}

AnyConfig parse_config_json(const json& j) {
  if (kind_of(j) == "probe") return probe_config_from_json(j);
  return rate_study_from_json(j);
}

AnyConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config_json(j);
}

json rate_study_to_json(const RateStudyConfig& c) {
  json j;
  j["kind"] = "rate_study";
  j["family"] = std::string(to_string(c.family));
  if (c.kernel) j["kernel"] = std::string(to_string(*c.kernel));
  j["sigma"] = c.sigma;
  put(j, "beta", c.beta);
  put(j, "b", c.b);
  put(j, "gamma", c.gamma);
  put(j, "B", c.B);
  put(j, "S_max", c.S_max);
  j["C"] = c.C;
  j["n_grid"] = c.n_grid;
  j["replicates"] = c.replicates;
  j["draws"] = c.draws;
  put(j, "M", c.M);
  j["calibration"] = std::string(to_string(c.calibration));
  j["M_candidates"] = c.M_candidates;
  j["calibration_target"] = c.calibration_target;
  j["pilot_replicates"] = c.pilot_replicates;
  put(j, "p", c.p);
  put(j, "alpha", c.alpha);
  j["response"] = std::string(to_string(c.response));
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["threads"] = c.threads;
  write_truth(j, c.truth);
  return j;
}

json probe_config_to_json(const ProbeConfig& c) {
  json j;
  j["kind"] = "probe";
  j["family"] = std::string(to_string(c.family));
  if (c.kernel) j["kernel"] = std::string(to_string(*c.kernel));
  j["sigma"] = c.sigma;
  j["n"] = c.n;
  put(j, "beta", c.beta);
  put(j, "b", c.b);
  put(j, "gamma", c.gamma);
  put(j, "B", c.B);
  put(j, "S_max", c.S_max);
  j["C"] = c.C;
  j["d"] = c.d;
  j["draws"] = c.draws;
  j["replicates"] = c.replicates;
  j["p"] = c.p;
  put(j, "alpha", c.alpha);
  j["conditions"] = c.conditions;
  j["seed"] = c.seed;
  j["output"] = c.output;
  write_truth(j, c.truth);
  return j;
}

json emit(const AnyConfig& cfg) {
  if (const auto* s = std::get_if<RateStudyConfig>(&cfg)) return rate_study_to_json(*s);
  return probe_config_to_json(std::get<ProbeConfig>(cfg));
}

}  // namespace ebrate
