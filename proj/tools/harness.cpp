#include "harness.hpp"

#include "acceptance.hpp"
#include "smoothcal/calibration_game.hpp"
#include "smoothcal/game_dynamics.hpp"
#include "smoothcal/io.hpp"
#include "smoothcal/online_regression.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

namespace smoothcal::harness {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_number(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x)) {
    throw SpecError("'" + key + "': expected a number, got '" + v + "'");
  }
  return x;
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  double x = to_number(key, v);
  if (x < 0.0 || x != std::floor(x) || x > 9.0e15) {
    throw SpecError("'" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::uint64_t>(x);
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split_csv_line(v)) out.push_back(to_number(key, trim(part)));
  if (out.empty()) throw SpecError("'" + key + "': empty list");
  return out;
}

// Typed view of the resolved parameter block.
class Params {
 public:
  explicit Params(const std::map<std::string, std::string>& p) : p_(p) {}
  const std::string& str(const std::string& k) const { return p_.at(k); }
  double num(const std::string& k) const { return to_number(k, str(k)); }
  std::size_t count(const std::string& k) const { return static_cast<std::size_t>(to_count(k, str(k))); }
  bool is(const std::string& k, const std::string& v) const { return str(k) == v; }
  std::string choice(const std::string& k, const std::vector<std::string>& allowed) const {
    const std::string& v = str(k);
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string msg = "'" + k + "': unknown value '" + v + "' (expected";
      for (const auto& a : allowed) msg += " " + a;
      throw SpecError(msg + ")");
    }
    return v;
  }

 private:
  const std::map<std::string, std::string>& p_;
};

SmoothingKernel parse_kernel(const Params& p) {
  std::string k = p.choice("kernel", {"tent", "gaussian", "indicator"});
  if (k == "indicator") return SmoothingKernel::indicator();
  double w = p.num("delta");
  if (w <= 0.0) throw SpecError("'delta': must be positive");
  return k == "tent" ? SmoothingKernel::tent(w) : SmoothingKernel::gaussian(w);
}

// Short label for a threshold in column and metric names.
std::string label(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

struct Assertion {
  std::string name;
  double value;
  double bound;
  bool upper;
  bool pass() const { return upper ? value <= bound : value >= bound; }
};

// What a subcommand hands back to the common writer.
struct Result {
  nlohmann::json resolved;                  // full resolved configuration
  nlohmann::json results;                   // kind-specific details
  std::map<std::string, double> metrics;    // flat, used by assertions
  std::vector<Assertion> builtin;
  std::vector<std::string> files;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::size_t auto_or_count(const Params& p, const std::string& k, std::size_t fallback) {
  return p.is(k, "auto") ? fallback : p.count(k);
}

// regress ----------------------------------------------------------------

Result run_regress(const ExperimentSpec& spec, const fs::path& out) {
  Params p(spec.params);
  Result r;
  const int d = static_cast<int>(p.count("d"));
  if (d < 1) throw SpecError("'d': must be at least 1");
  const double eps = p.num("eps"), X = p.num("X"), Y = p.num("Y");
  TunedParameters tuned = tune_parameters(eps, X, Y, d);

  RegressionParams rp;
  rp.variant = regression_variant_from_string(
      p.choice("variant", {"forward", "discounted", "windowed"}));
  rp.d = d;
  rp.a = p.is("a", "tuned") ? tuned.a : p.num("a");
  rp.lambda = p.is("lambda", "tuned") ? tuned.lambda : p.num("lambda");
  if (rp.variant == RegressionVariant::forward) rp.lambda = 1.0;
  rp.R = p.is("R", "tuned") ? tuned.R : p.count("R");
  rp.X = X;
  rp.Y = Y;
  rp.validate();
  const std::size_t R = rp.R;
  const std::size_t T = auto_or_count(p, "T", 10 * R);
  if (T < 1) throw SpecError("'T': must be positive");
  DataKind kind = data_kind_from_string(
      p.choice("data", {"random_linear", "uniform", "flip", "adaptive_sign", "constant"}));
  const int radius = static_cast<int>(p.count("theta_radius"));

  DataGenerator gen(kind, d, spec.seed, X, Y);
  OnlineRegressor reg(rp);
  const std::size_t window = rp.variant == RegressionVariant::windowed ? R : T;
  RegretTracker tracker(d, window, theta_grid(d, radius), eps);

  std::ostringstream csv;
  csv << "t";
  for (int j = 1; j <= d; ++j) csv << ",theta_" << j;
  csv << ",psi,window_regret\n";
  std::vector<double> row;
  for (std::size_t t = 1; t <= T; ++t) {
    Vector x = gen.features(t);
    const Vector& th = reg.predict(x);
    const double pred = th.dot(x);
    const double y = gen.target(t, x, pred);
    tracker.record(x, y, pred);
    double worst = -INFINITY;
    for (std::size_t i = 0; i < tracker.thetas().size(); ++i) {
      worst = std::max(worst, tracker.windowed_average(i));
    }
    row.assign(th.data(), th.data() + d);
    row.push_back((y - pred) * (y - pred));
    row.push_back(worst);
    csv << t << ',' << csv_row(row) << '\n';
    reg.update(x, y);
  }
  write_file(out / "steps.csv", csv.str());
  r.files.push_back("steps.csv");

  RegretReport rep = make_report(tracker, eps);
  rep.R = window;
  r.resolved = {{"regression", rp.to_json()}, {"T", T}, {"data", to_string(kind)},
                {"eps", eps}, {"theta_radius", radius}, {"tuned", tuned.to_json()}};
  r.results = {{"report", rep.to_json()}, {"tuning_check", check_tuning(tuned).ok}};
  r.metrics = {{"violations", static_cast<double>(rep.violations)},
               {"checks", static_cast<double>(rep.checks)}};
  // Margins exist only once a full window has been checked.
  if (std::isfinite(rep.worst_windowed_margin)) r.metrics["worst_window_margin"] = rep.worst_windowed_margin;
  if (std::isfinite(rep.worst_cumulative_margin)) {
    r.metrics["worst_cumulative_margin"] = rep.worst_cumulative_margin;
  }
  r.builtin.push_back({"max_violations", static_cast<double>(rep.violations), 0.0, true});
  return r;
}

// calibrate --------------------------------------------------------------

DeskSettings desk_from(const Params& p) {
  DeskSettings s;
  s.m = static_cast<int>(p.count("m"));
  s.eps = p.num("eps");
  s.L = p.num("L");
  s.net_radius = p.num("net_radius");
  s.lambda = p.num("lambda");
  s.R = p.count("R");
  return s;
}

Vector constant_vector(int m, double v) { return Vector::Constant(m, v); }

Result run_calibrate(const ExperimentSpec& spec, const fs::path& out) {
  Params p(spec.params);
  Result r;
  DeskSettings desk = desk_from(p);
  if (desk.m < 1) throw SpecError("'m': must be at least 1");
  const ConvexDomain C = ConvexDomain::unit_box(desk.m);
  const std::size_t T = p.count("T");
  if (T < 1) throw SpecError("'T': must be positive");
  const GameMode mode = p.choice("mode", {"leaky", "standard"}) == "leaky" ? GameMode::leaky
                                                                           : GameMode::standard;
  const SmoothingKernel kernel = parse_kernel(p);

  std::unique_ptr<Forecaster> f;
  std::string fk = p.choice("forecaster", {"weak", "alternating", "constant"});
  std::shared_ptr<const ForecasterConfig> cfg;
  if (fk == "weak") {
    cfg = std::make_shared<const ForecasterConfig>(desk_config(desk));
    f = std::make_unique<WeakCalibratedPlayer>(cfg);
  } else if (fk == "alternating") {
    std::vector<Vector> cycle;
    for (double v : to_list("cycle", p.str("cycle"))) cycle.push_back(constant_vector(desk.m, v));
    f = std::make_unique<AlternatingForecaster>(C, cycle);
  } else {
    f = std::make_unique<ConstantForecaster>(C, constant_vector(desk.m, p.num("value")));
  }

  std::string ak = p.choice("adversary", {"threshold", "random", "one_minus", "constant",
                                          "simulating_best_response"});
  Adversary adv = [&] {
    if (ak == "threshold") return Adversary::threshold(p.num("cut"), mode);
    if (ak == "random") return Adversary::seeded_random(p.num("p"));
    if (ak == "one_minus") {
      return Adversary::reaction("one_minus", [](const Vector& c) { return Vector(1.0 - c.array()); },
                                 mode);
    }
    if (ak == "constant") return Adversary::constant(constant_vector(desk.m, p.num("action")));
    return Adversary::simulating_best_response(weight_presets(C), mode);
  }();

  PlayResult play_result = play(*f, adv, T, spec.seed);
  const Transcript& tr = play_result.transcript;
  std::ostringstream csv;
  tr.write_csv(csv);
  write_file(out / "transcript.csv", csv.str());
  r.files.push_back("transcript.csv");

  SmoothedScores ss = smoothed_scores(tr, kernel);
  nlohmann::json weak = nlohmann::json::object();
  double smax = 0.0;
  for (const auto& w : weight_presets(C)) {
    double s = weak_score(tr, w);
    weak[w.name] = s;
    r.metrics["S_" + w.name] = s;
    smax = std::max(smax, s);
  }
  r.metrics["K"] = calibration_score(tr);
  r.metrics["K_smooth"] = ss.K;
  r.metrics["K_tilde"] = ss.K_tilde;
  r.metrics["S_max"] = smax;
  r.metrics["replica_mismatches"] = static_cast<double>(play_result.replica_mismatches);

  r.resolved = {{"forecaster", f->describe()}, {"adversary", adv.describe()},
                {"mode", to_string(mode)}, {"T", T}, {"kernel", kernel.to_json()},
                {"desk", nlohmann::json{{"m", desk.m}, {"eps", desk.eps}, {"L", desk.L},
                                        {"net_radius", desk.net_radius}, {"lambda", desk.lambda},
                                        {"R", desk.R}}}};
  if (cfg) r.resolved["forecaster_config"] = cfg->to_json();
  r.results = {{"K", r.metrics["K"]}, {"K_smooth", ss.K}, {"K_tilde", ss.K_tilde}, {"weak", weak},
               {"replica_mismatches", play_result.replica_mismatches}};
  if (auto* w = dynamic_cast<WeakCalibratedPlayer*>(f.get())) {
    const FixedPointStats& st = w->engine().stats();
    r.results["fixed_point"] = st.to_json();
    r.metrics["fp_worst_residual"] = st.worst_residual;
    r.metrics["fp_fine_share"] =
        st.periods ? static_cast<double>(st.fine) / static_cast<double>(st.periods) : 1.0;
  }
  if (mode == GameMode::standard) {
    r.builtin.push_back({"max_replica_mismatches", r.metrics["replica_mismatches"], 0.0, true});
  }
  return r;
}

// score ------------------------------------------------------------------

Result run_score(const ExperimentSpec& spec, const fs::path&) {
  Params p(spec.params);
  Result r;
  const int m = static_cast<int>(p.count("m"));
  if (m < 1) throw SpecError("'m': must be at least 1");
  if (p.str("transcript").empty()) throw SpecError("'transcript': a transcript CSV is required");
  std::ifstream is(p.str("transcript"));
  if (!is) throw SpecError("'transcript': cannot open '" + p.str("transcript") + "'");
  const ConvexDomain C = ConvexDomain::unit_box(m);
  Transcript tr = [&] {
    try {
      return Transcript::read_csv(is, C);
    } catch (const InvalidArgument& e) {
      throw SpecError(std::string("'transcript': ") + e.what());
    }
  }();
  const SmoothingKernel kernel = parse_kernel(p);
  const double alpha = p.is("alpha", "auto") ? C.diameter() : p.num("alpha");

  SmoothedScores ss = smoothed_scores(tr, kernel);
  nlohmann::json weak = nlohmann::json::object();
  for (const auto& w : weight_presets(C)) {
    double s = weak_score(tr, w);
    weak[w.name] = s;
    r.metrics["S_" + w.name] = s;
  }
  std::vector<Vector> residuals;
  for (std::size_t t = 0; t < tr.size(); ++t) residuals.push_back(tr.action(t) - tr.forecast(t));
  nlohmann::json lemma = nullptr;
  if (kernel.kind() != SmoothingKernel::Kind::indicator) {
    AveragingBound ab = averaging_bound(tr.forecasts(), residuals, kernel, alpha);
    lemma = {{"lhs", ab.lhs}, {"kappa", ab.kappa}, {"gamma", ab.gamma}, {"rhs", ab.rhs},
             {"holds", ab.holds()}};
    r.metrics["lemma_lhs"] = ab.lhs;
    r.metrics["lemma_rhs"] = ab.rhs;
    r.builtin.push_back({"lemma_margin", ab.lhs - ab.rhs, 0.0, true});
  }
  IndicatorBound ib = indicator_sup_bound(tr);
  r.metrics["K"] = calibration_score(tr);
  r.metrics["K_smooth"] = ss.K;
  r.metrics["K_tilde"] = ss.K_tilde;
  r.metrics["indicator_sup_S"] = ib.sup_S;
  r.builtin.push_back({"indicator_bound_margin", ib.K - 2.0 * m * ib.sup_S, 0.0, true});

  r.resolved = {{"transcript", p.str("transcript")}, {"T", tr.size()}, {"m", m},
                {"kernel", kernel.to_json()}, {"alpha", alpha}};
  r.results = {{"K", r.metrics["K"]}, {"K_smooth", ss.K}, {"K_tilde", ss.K_tilde}, {"weak", weak},
               {"averaging_lemma", lemma},
               {"indicator_bound", {{"K", ib.K}, {"sup_S", ib.sup_S}, {"rhs", 2.0 * m * ib.sup_S}}}};
  return r;
}

// dynamics ---------------------------------------------------------------

FiniteGame load_game(const std::string& g) {
  auto names = FiniteGame::preset_names();
  if (std::find(names.begin(), names.end(), g) != names.end()) return FiniteGame::preset(g);
  std::ifstream is(g);
  if (!is) throw SpecError("'game': neither a preset nor a readable file: '" + g + "'");
  try {
    return FiniteGame::from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("'game': " + std::string(e.what()));
  } catch (const InvalidArgument& e) {
    throw SpecError("'game': " + std::string(e.what()));
  }
}

Result run_dynamics(const ExperimentSpec& spec, const fs::path& out) {
  Params p(spec.params);
  Result r;
  FiniteGame game = load_game(p.str("game"));
  DynamicDeskSettings s;
  s.eps_g = p.num("eps");
  s.br_net_radius = p.num("br_net_radius");
  s.kernel_delta = p.num("kernel_delta");
  s.markov_threshold = p.num("markov_threshold");
  s.forecaster.eps = p.num("forecast_eps");
  s.forecaster.L = p.num("L");
  s.forecaster.net_radius = p.num("net_radius");
  s.forecaster.lambda = p.num("lambda");
  s.forecaster.R = p.count("R");
  const std::size_t T = p.count("T");
  if (T < 1) throw SpecError("'T': must be positive");

  DynamicConfig cfg = make_dynamic_config(game, s, T, spec.seed);
  cfg.ne_eps = to_list("ne_eps", p.str("ne_eps"));
  LearningRun run = run_smooth_calibrated_learning(game, cfg);

  const int m = game.total_actions();
  std::ostringstream csv;
  csv << "t";
  for (int i = 1; i <= m; ++i) csv << ",c_" << i;
  for (int i = 1; i <= m; ++i) csv << ",x_" << i;
  for (int i = 1; i <= game.players(); ++i) csv << ",a_" << i;
  for (double e : cfg.ne_eps) csv << ",in_ne_" << label(e);
  csv << ",fp_gap\n";
  std::vector<double> row;
  for (std::size_t t = 0; t < run.c.size(); ++t) {
    row.assign(run.c[t].data(), run.c[t].data() + m);
    row.insert(row.end(), run.x[t].data(), run.x[t].data() + m);
    csv << (t + 1) << ',' << csv_row(row);
    for (int a : run.a[t]) csv << ',' << a;
    for (double e : cfg.ne_eps) csv << ',' << (run.nash_gap[t] <= e ? 1 : 0);
    csv << ',' << format_double(run.fp_gap[t]) << '\n';
  }
  write_file(out / "steps.csv", csv.str());
  r.files.push_back("steps.csv");

  nlohmann::json series = nlohmann::json::array();
  for (const auto& [e, frac] : run.ne_fraction) {
    series.push_back({{"eps", e}, {"fraction", frac}});
    r.metrics["ne_fraction_" + label(e)] = frac;
  }
  const std::size_t q = T / 4;
  const double q1 = q ? run.mean_fp_gap(0, q) : run.mean_fp_gap(0, T);
  const double q4 = q ? run.mean_fp_gap(T - q, T) : run.mean_fp_gap(0, T);
  const auto& d = run.diagnostics;
  r.metrics["fp_gap_first_quarter"] = q1;
  r.metrics["fp_gap_last_quarter"] = q4;
  r.metrics["k_lambda"] = d.k_lambda;
  r.metrics["xc_mean"] = d.xc_mean;
  r.metrics["markov_fraction"] = d.markov_fraction;
  r.builtin.push_back({"xc_mean_minus_bound", d.xc_mean - d.xc_bound, 1e-12, true});
  r.builtin.push_back({"markov_fraction_minus_bound", d.markov_fraction - d.markov_bound, 1e-12, true});

  r.resolved = {{"game", game.to_json()}, {"dynamics", cfg.to_json()}};
  r.results = {{"ne_fraction", series},
               {"mean_forecast", vec_json(run.mean_forecast())},
               {"fp_gap_first_quarter", q1},
               {"fp_gap_last_quarter", q4},
               {"diagnostics", d.to_json()}};
  return r;
}

// selftest ---------------------------------------------------------------

Result run_selftest(const ExperimentSpec& spec, const fs::path& out, std::ostream* log) {
  Params p(spec.params);
  Result r;
  std::vector<int> ids;
  if (p.is("criteria", "all")) {
    ids = acceptance::Suite::ids();
  } else {
    auto all = acceptance::Suite::ids();
    for (double v : to_list("criteria", p.str("criteria"))) {
      int id = static_cast<int>(v);
      if (v != id || std::find(all.begin(), all.end(), id) == all.end()) {
        throw SpecError("'criteria': unknown criterion '" + format_double(v) + "'");
      }
      ids.push_back(id);
    }
  }
  acceptance::Suite suite(log);
  nlohmann::json outcomes = nlohmann::json::array();
  std::ostringstream csv;
  csv << "criterion,pass\n";
  std::size_t failed = 0;
  for (int id : ids) {
    acceptance::Outcome o = suite.run(id);
    if (log) *log << acceptance::format_line(o) << std::endl;
    if (!o.pass) ++failed;
    outcomes.push_back(acceptance::to_json(o));
    csv << id << ',' << (o.pass ? 1 : 0) << '\n';
  }
  write_file(out / "criteria.csv", csv.str());
  r.files.push_back("criteria.csv");
  r.resolved = {{"criteria", ids}};
  r.results = {{"criteria", outcomes}};
  r.metrics["criteria_run"] = static_cast<double>(ids.size());
  r.metrics["criteria_failed"] = static_cast<double>(failed);
  r.builtin.push_back({"max_criteria_failed", static_cast<double>(failed), 0.0, true});
  return r;
}

std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

nlohmann::json assertion_json(const Assertion& a) {
  return {{"name", a.name}, {"value", a.value}, {"bound", a.bound},
          {"op", a.upper ? "<=" : ">="}, {"pass", a.pass()}};
}

}  // namespace

const std::vector<std::string>& kinds() {
  static const std::vector<std::string> k = {"regress", "calibrate", "score", "dynamics", "selftest"};
  return k;
}

const std::map<std::string, std::string>& parameter_defaults(const std::string& kind) {
  static const std::map<std::string, std::map<std::string, std::string>> table = {
      {"regress",
       {{"variant", "windowed"}, {"d", "1"}, {"eps", "0.5"}, {"a", "tuned"}, {"lambda", "tuned"},
        {"R", "tuned"}, {"T", "auto"}, {"X", "1"}, {"Y", "1"}, {"data", "random_linear"},
        {"theta_radius", "2"}}},
      {"calibrate",
       {{"forecaster", "weak"}, {"adversary", "threshold"}, {"mode", "leaky"}, {"T", "1000"},
        {"cut", "0.5"}, {"p", "0.5"}, {"action", "1"}, {"cycle", "0.5001,0.4999"}, {"value", "0.5"},
        {"kernel", "tent"}, {"delta", "0.05"}, {"m", "1"}, {"eps", "0.05"}, {"L", "4"},
        {"net_radius", "0.05"}, {"lambda", "0.995"}, {"R", "1000"}}},
      {"score",
       {{"transcript", ""}, {"m", "1"}, {"kernel", "tent"}, {"delta", "0.05"}, {"alpha", "auto"}}},
      {"dynamics",
       {{"game", "matching_pennies"}, {"eps", "0.1"}, {"T", "20000"}, {"br_net_radius", "0.1"},
        {"kernel_delta", "0.1"}, {"markov_threshold", "0.1"}, {"forecast_eps", "0.05"}, {"L", "4"},
        {"net_radius", "0.25"}, {"lambda", "0.99999"}, {"R", "20000"},
        {"ne_eps", "0.05,0.1,0.2,0.3,0.5"}}},
      {"selftest", {{"criteria", "all"}}}};
  auto it = table.find(kind);
  if (it == table.end()) throw SpecError("unknown kind '" + kind + "'");
  return it->second;
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json params_json = nlohmann::json::object();
  for (const auto& [k, v] : params) params_json[k] = v;
  nlohmann::json asserts_json = nlohmann::json::object();
  for (const auto& [k, v] : asserts) asserts_json[k] = v;
  return {{"kind", kind}, {"seed", seed}, {"out", out}, {"profile", profile},
          {"params", params_json}, {"assert", asserts_json}};
}

ExperimentSpec parse_spec(std::istream& is, const std::string& source) {
  ExperimentSpec spec;
  std::string line, section;
  std::map<std::string, std::string> top;
  std::map<std::string, std::map<std::string, std::string>> sections;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const std::string where = source + ":" + std::to_string(n) + ": ";
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw SpecError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw SpecError(where + "empty section name");
      if (sections.count(section)) throw SpecError(where + "duplicate section [" + section + "]");
      sections[section];
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw SpecError(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw SpecError(where + "empty key");
    auto& target = section.empty() ? top : sections[section];
    if (target.count(key)) throw SpecError(where + "duplicate key '" + key + "'");
    target[key] = value;
  }
  for (const auto& [k, v] : top) {
    if (k == "kind") {
      spec.kind = v;
    } else if (k == "seed") {
      spec.seed = to_count("seed", v);
    } else if (k == "out") {
      spec.out = v;
    } else if (k == "profile") {
      spec.profile = v;
    } else {
      throw SpecError(source + ": unknown top-level key '" + k + "'");
    }
  }
  if (spec.kind.empty()) throw SpecError(source + ": missing 'kind'");
  parameter_defaults(spec.kind);
  for (const auto& [name, body] : sections) {
    if (name == spec.kind) {
      spec.params = body;
    } else if (name == "assert") {
      for (const auto& [k, v] : body) spec.asserts[k] = to_number(k, v);
    } else {
      throw SpecError(source + ": unknown section [" + name + "] for kind '" + spec.kind + "'");
    }
  }
  return spec;
}

ExperimentSpec read_spec_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw SpecError("cannot open spec file '" + path + "'");
  return parse_spec(is, path);
}

void resolve(ExperimentSpec& spec) {
  const auto& defaults = parameter_defaults(spec.kind);
  for (const auto& [k, v] : spec.params) {
    if (!defaults.count(k)) throw SpecError("unknown parameter '" + k + "' for kind '" + spec.kind + "'");
  }
  for (const auto& [k, v] : defaults) spec.params.emplace(k, v);
  for (const auto& [k, v] : spec.asserts) {
    if (k.rfind("min_", 0) != 0 && k.rfind("max_", 0) != 0) {
      throw SpecError("assertion '" + k + "': must start with min_ or max_");
    }
  }
  if (spec.profile != "desk" && spec.profile != "theory") {
    throw SpecError("'profile': expected desk or theory, got '" + spec.profile + "'");
  }
  if (spec.out.empty()) spec.out = "out/" + spec.kind;
}

Exit run(const ExperimentSpec& spec_in, const RunOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentSpec spec = spec_in;
  Result r;
  nlohmann::json abort = nullptr;
  Exit status = Exit::ok;
  fs::path out;
  try {
    resolve(spec);
    out = spec.out;
    fs::create_directories(out);
    if (spec.profile == "theory" && (spec.kind == "calibrate" || spec.kind == "dynamics")) {
      // The theory constants are reported; the construction they describe
      // is far beyond what can be allocated.
      Params p(spec.params);
      if (spec.kind == "calibrate") {
        auto m = static_cast<int>(p.count("m"));
        r.results["theory"] = theory_constants(ConvexDomain::unit_box(m), p.num("eps"), p.num("L")).to_json();
      } else {
        FiniteGame game = load_game(p.str("game"));
        r.results["theory"] = tune_dynamic_parameters(p.num("eps"), game.shape(), game.payoff_bound()).to_json();
      }
      r.metrics["instantiated"] = 0.0;
      r.builtin.push_back({"min_instantiated", 0.0, 1.0, false});
    } else if (spec.kind == "regress") {
      r = run_regress(spec, out);
    } else if (spec.kind == "calibrate") {
      r = run_calibrate(spec, out);
    } else if (spec.kind == "score") {
      r = run_score(spec, out);
    } else if (spec.kind == "dynamics") {
      r = run_dynamics(spec, out);
    } else {
      r = run_selftest(spec, out, options.log);
    }
  } catch (const SpecError& e) {
    if (options.log) *options.log << "malformed spec: " << e.what() << std::endl;
    return Exit::malformed;
  } catch (const InvalidArgument& e) {
    if (options.log) *options.log << "malformed spec: " << e.what() << std::endl;
    return Exit::malformed;
  } catch (const ForecasterAbort& e) {
    abort = {{"period", e.period()}, {"message", e.what()}};
    status = Exit::aborted;
  } catch (const std::exception& e) {
    abort = {{"period", nullptr}, {"message", e.what()}};
    status = Exit::aborted;
  }

  std::vector<Assertion> checks = r.builtin;
  for (const auto& [k, bound] : spec.asserts) {
    std::string metric = k.substr(4);
    auto it = r.metrics.find(metric);
    if (it == r.metrics.end()) {
      if (status == Exit::aborted) continue;
      if (options.log) *options.log << "malformed spec: no metric '" << metric << "'" << std::endl;
      return Exit::malformed;
    }
    checks.push_back({k, it->second, bound, k.rfind("max_", 0) == 0});
  }
  bool all = true;
  nlohmann::json assertions = nlohmann::json::array();
  for (const auto& a : checks) {
    assertions.push_back(assertion_json(a));
    all = all && a.pass();
  }
  if (status == Exit::ok && !all) status = Exit::assertion_failed;

  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  nlohmann::json metadata = {
      {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  if (options.timestamp) metadata["timestamp"] = timestamp_utc();
  nlohmann::json summary = {{"schema", "smoothcal-summary-1"},
                            {"kind", spec.kind},
                            {"build_id", options.build_id},
                            {"spec", spec.to_json()},
                            {"config", r.resolved},
                            {"metrics", metrics},
                            {"assertions", assertions},
                            {"results", r.results},
                            {"files", r.files},
                            {"abort", abort},
                            {"exit_status", static_cast<int>(status)},
                            {"pass", status == Exit::ok},
                            {"metadata", metadata}};
  write_file(out / "summary.json", summary.dump(2) + "\n");
  if (options.log) {
    if (status == Exit::aborted) {
      *options.log << "aborted";
      if (!abort["period"].is_null()) *options.log << " at period " << abort["period"].get<std::size_t>();
      *options.log << ": " << abort["message"].get<std::string>() << std::endl;
    } else {
      *options.log << (status == Exit::ok ? "PASS" : "FAIL") << "  " << spec.kind << " -> "
                   << (out / "summary.json").string() << std::endl;
    }
  }
  return status;
}

}  // namespace smoothcal::harness
