#include "smoothcal/game_dynamics.hpp"

#include "smoothcal/calibration_game.hpp"
#include "smoothcal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace smoothcal {

namespace {

bool same_bits(const Vector& x, const Vector& y) {
  return x.size() == y.size() &&
         std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
}

// Advances a mixed-radix counter; false after the last profile.
bool next_profile(std::vector<int>& pure, const std::vector<int>& shape) {
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    auto k = static_cast<std::size_t>(i);
    if (++pure[k] < shape[k]) return true;
    pure[k] = 0;
  }
  return false;
}

int argmax_first(const Vector& v) {
  int best = 0;
  for (int k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

// Inverse-CDF draw from a distribution block.
int sample(const Vector& p, double u) {
  double acc = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  for (int k = static_cast<int>(p.size()) - 1; k >= 0; --k) {
    if (p[k] > 0.0) return k;
  }
  return 0;
}

}  // namespace

FiniteGame::FiniteGame(std::string name, std::vector<int> actions,
                       std::vector<std::vector<double>> payoffs)
    : name_(std::move(name)), actions_(std::move(actions)), payoffs_(std::move(payoffs)) {
  require(!actions_.empty(), "game: no players");
  require(payoffs_.size() == actions_.size(), "game: one payoff table per player");
  std::size_t count = 1;
  for (int k : actions_) {
    require(k >= 1, "game: every player needs an action");
    offsets_.push_back(total_);
    total_ += k;
    count *= static_cast<std::size_t>(k);
  }
  for (const auto& table : payoffs_) {
    require(table.size() == count, "game: payoff table size does not match the shape");
    for (double v : table) {
      require(std::isfinite(v), "game: payoffs must be finite");
      bound_ = std::max(bound_, std::abs(v));
    }
  }
}

FiniteGame FiniteGame::preset(const std::string& name) {
  if (name == "matching_pennies") {
    return FiniteGame(name, {2, 2}, {{1, -1, -1, 1}, {-1, 1, 1, -1}});
  }
  if (name == "coordination") {
    return FiniteGame(name, {2, 2}, {{1, 0, 0, 1}, {1, 0, 0, 1}});
  }
  if (name == "prisoners_dilemma") {
    // Actions (cooperate, defect).
    return FiniteGame(name, {2, 2}, {{3, 0, 5, 1}, {3, 5, 0, 1}});
  }
  if (name == "shapley") {
    return FiniteGame(name, {3, 3},
                      {{0, 1, 0, 0, 0, 1, 1, 0, 0}, {0, 0, 1, 1, 0, 0, 0, 1, 0}});
  }
  throw InvalidArgument("game: unknown preset '" + name + "'");
}

std::vector<std::string> FiniteGame::preset_names() {
  return {"matching_pennies", "coordination", "prisoners_dilemma", "shapley"};
}

FiniteGame FiniteGame::from_json(const nlohmann::json& j) {
  require(j.is_object(), "game: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(key == "name" || key == "players" || key == "shapes" || key == "payoffs",
            "game: unknown key '" + key + "'");
  }
  try {
    auto shapes = j.at("shapes").get<std::vector<int>>();
    auto payoffs = j.at("payoffs").get<std::vector<std::vector<double>>>();
    if (j.contains("players")) {
      require(j.at("players").get<int>() == static_cast<int>(shapes.size()),
              "game: 'players' does not match 'shapes'");
    }
    return FiniteGame(j.value("name", std::string("custom")), std::move(shapes),
                      std::move(payoffs));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("game: ") + e.what());
  }
}

nlohmann::json FiniteGame::to_json() const {
  return {{"name", name_}, {"players", players()}, {"shapes", actions_}, {"payoffs", payoffs_}};
}

ConvexDomain FiniteGame::domain() const {
  std::vector<ConvexDomain> f;
  for (int k : actions_) f.push_back(ConvexDomain::simplex(k));
  return ConvexDomain::product(std::move(f));
}

std::size_t FiniteGame::flat_index(const std::vector<int>& pure) const {
  require(pure.size() == actions_.size(), "game: pure profile has the wrong length");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    require(pure[i] >= 0 && pure[i] < actions_[i], "game: action index out of range");
    idx = idx * static_cast<std::size_t>(actions_[i]) + static_cast<std::size_t>(pure[i]);
  }
  return idx;
}

double FiniteGame::payoff(int i, const std::vector<int>& pure) const {
  require(i >= 0 && i < players(), "game: player index out of range");
  return payoffs_[static_cast<std::size_t>(i)][flat_index(pure)];
}

void FiniteGame::require_profile(const Vector& x) const {
  require(x.size() == total_, "game: profile dimension mismatch");
  for (int i = 0; i < players(); ++i) {
    auto block = x.segment(offset(i), actions(i));
    require(block.minCoeff() >= 0.0 && std::abs(block.sum() - 1.0) <= 1e-12,
            "game: profile block is not a distribution");
  }
}

Vector FiniteGame::deviation_payoffs(int i, const Vector& x) const {
  require(i >= 0 && i < players(), "game: player index out of range");
  require(x.size() == total_, "game: profile dimension mismatch");
  const auto& table = payoffs_[static_cast<std::size_t>(i)];
  Vector out = Vector::Zero(actions(i));
  std::vector<int> pure(actions_.size(), 0);
  std::size_t idx = 0;
  do {
    double w = 1.0;
    for (int j = 0; j < players() && w != 0.0; ++j) {
      if (j != i) w *= x[offset(j) + pure[static_cast<std::size_t>(j)]];
    }
    if (w != 0.0) out[pure[static_cast<std::size_t>(i)]] += w * table[idx];
    ++idx;
  } while (next_profile(pure, actions_));
  return out;
}

double FiniteGame::expected(int i, const Vector& x) const {
  return deviation_payoffs(i, x).dot(x.segment(offset(i), actions(i)));
}

OwnPayoff FiniteGame::own_payoff(int i) const {
  require(i >= 0 && i < players(), "game: player index out of range");
  // Only player i's table is captured.
  FiniteGame own(name_, actions_,
                 std::vector<std::vector<double>>(actions_.size(),
                                                  payoffs_[static_cast<std::size_t>(i)]));
  OwnPayoff p;
  p.offset = offset(i);
  p.length = actions(i);
  p.lipschitz = std::sqrt(static_cast<double>(actions(i))) * std::max(bound_, 1e-300);
  p.value = [own, i](const Vector& x) { return own.expected(i, x); };
  p.best_reply = [own, i](const Vector& x) {
    return Vector(Vector::Unit(own.actions(i), argmax_first(own.deviation_payoffs(i, x))));
  };
  p.best_value = [own, i](const Vector& x) { return own.deviation_payoffs(i, x).maxCoeff(); };
  return p;
}

Vector FiniteGame::embed(const std::vector<int>& pure) const {
  require(pure.size() == actions_.size(), "game: pure profile has the wrong length");
  Vector v = Vector::Zero(total_);
  for (int i = 0; i < players(); ++i) {
    int k = pure[static_cast<std::size_t>(i)];
    require(k >= 0 && k < actions(i), "game: action index out of range");
    v[offset(i) + k] = 1.0;
  }
  return v;
}

NashCheck eps_nash_check(const FiniteGame& game, const Vector& x, double eps) {
  game.require_profile(x);
  NashCheck out;
  for (int i = 0; i < game.players(); ++i) {
    Vector dev = game.deviation_payoffs(i, x);
    double current = dev.dot(x.segment(game.offset(i), game.actions(i)));
    double gap = std::max(0.0, dev.maxCoeff() - current);
    out.gaps.push_back(gap);
    out.worst_gap = std::max(out.worst_gap, gap);
  }
  out.member = out.worst_gap <= eps;
  return out;
}

nlohmann::json DynamicSchedule::to_json() const {
  return {{"eps", eps},     {"n", n},         {"m", m},         {"U", U},
          {"nu_m", nu_m},   {"gamma_m", gamma_m}, {"eps_g", eps_g}, {"L_g", L_g},
          {"eps4", eps4},   {"eps_c", eps_c}, {"L_c", L_c},     {"eps2", eps2},
          {"eps1", eps1},   {"eps3", eps3},   {"eps5", eps5}};
}

DynamicSchedule tune_dynamic_parameters(double eps, const std::vector<int>& shape, double U) {
  require(eps > 0.0, "tune_dynamic_parameters: eps must be positive");
  require(U > 0.0, "tune_dynamic_parameters: payoff bound must be positive");
  require(!shape.empty(), "tune_dynamic_parameters: no players");
  DynamicSchedule s;
  s.eps = eps;
  s.n = static_cast<int>(shape.size());
  for (int k : shape) {
    require(k >= 1, "tune_dynamic_parameters: every player needs an action");
    s.m += k;
  }
  s.U = U;
  const double m = s.m, rm = std::sqrt(m);
  s.nu_m = best_reply_lipschitz_factor(s.m);
  // Averaging constant of [0,1]^m, whose diameter is sqrt(m).
  s.gamma_m = averaging_constant(s.m, rm);
  s.eps_g = eps;
  s.L_g = s.nu_m * std::pow(rm * U / eps, m + 1.0);
  s.eps4 = 2.0 * eps / (rm * U * s.L_g);
  s.eps_c = eps * s.eps4;
  s.L_c = (1.0 + s.n * s.L_g) / (eps * s.eps4);
  s.eps2 = eps * s.eps4;
  s.eps1 = s.eps2 * s.eps2 / (s.gamma_m * s.gamma_m * std::pow(s.L_c, m) * (1.0 + rm * s.L_c));
  s.eps3 = s.eps_c + s.eps2 + 1.0 / s.L_c + s.n * s.L_g / s.L_c;
  s.eps5 = s.eps_g + rm * U * s.L_g * s.eps4;
  return s;
}

nlohmann::json DynamicConfig::to_json() const {
  nlohmann::json j = {{"profile", profile},
                      {"eps_g", eps_g},
                      {"br_net_radius", br_net_radius},
                      {"kernel", kernel.to_json()},
                      {"markov_threshold", markov_threshold},
                      {"T", T},
                      {"seed", seed},
                      {"ne_eps", ne_eps},
                      {"shared_check_every", shared_check_every},
                      {"theory", nullptr}};
  if (forecaster) j["forecaster"] = forecaster->to_json();
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& g : best_replies) nets.push_back(g.partition().size());
  j["best_reply_net_sizes"] = nets;
  if (theory) j["theory"] = theory->to_json();
  return j;
}

DynamicConfig make_dynamic_config(const FiniteGame& game, const DynamicDeskSettings& s,
                                  std::size_t T, std::uint64_t seed) {
  require(T >= 1, "dynamics: T must be positive");
  const ConvexDomain X = game.domain();
  DynamicConfig cfg;
  cfg.forecaster = std::make_shared<const ForecasterConfig>(desk_config(X, s.forecaster));
  for (int i = 0; i < game.players(); ++i) {
    cfg.best_replies.push_back(
        smooth_best_reply(game.own_payoff(i), X, s.eps_g, s.br_net_radius));
  }
  cfg.eps_g = s.eps_g;
  cfg.br_net_radius = s.br_net_radius;
  cfg.kernel = SmoothingKernel::tent(s.kernel_delta);
  cfg.markov_threshold = s.markov_threshold;
  cfg.T = T;
  cfg.seed = seed;
  return cfg;
}

nlohmann::json LearningDiagnostics::to_json() const {
  return {{"k_lambda", k_lambda},
          {"ax_gap_quarter", ax_gap_quarter},
          {"ax_gap", ax_gap},
          {"xc_mean", xc_mean},
          {"xc_bound", xc_bound},
          {"markov_fraction", markov_fraction},
          {"markov_bound", markov_bound},
          {"shared_checks", shared_checks},
          {"fixed_point", fixed_point.to_json()}};
}

double LearningRun::fraction_in_ne(double eps) const {
  require(!nash_gap.empty(), "learning run: empty trajectory");
  std::size_t hits = 0;
  for (double g : nash_gap) {
    if (g <= eps) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(nash_gap.size());
}

double LearningRun::mean_fp_gap(std::size_t begin, std::size_t end) const {
  require(begin < end && end <= fp_gap.size(), "learning run: bad period range");
  double s = 0.0;
  for (std::size_t t = begin; t < end; ++t) s += fp_gap[t];
  return s / static_cast<double>(end - begin);
}

Vector LearningRun::mean_forecast() const {
  require(!c.empty(), "learning run: empty trajectory");
  Vector s = Vector::Zero(c.front().size());
  for (const auto& v : c) s += v;
  return s / static_cast<double>(c.size());
}

namespace {

// (1/n) sum_t ||abar_t - xbar_t|| over the first n periods.
double smoothed_gap(const ConvexDomain& X, const std::vector<Vector>& c,
                    const std::vector<Vector>& a, const std::vector<Vector>& x, std::size_t n,
                    const SmoothingKernel& kernel) {
  Transcript ta(X), tx(X);
  ta.reserve(n);
  tx.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    ta.append(c[t], a[t]);
    tx.append(c[t], x[t]);
  }
  SmoothedPath pa = smoothed_path(ta, kernel);
  SmoothedPath px = smoothed_path(tx, kernel);
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) s += (pa.a_bar[t] - px.a_bar[t]).norm();
  return s / static_cast<double>(n);
}

}  // namespace

LearningRun run_smooth_calibrated_learning(const FiniteGame& game, const DynamicConfig& config) {
  require(config.forecaster != nullptr, "dynamics: missing forecaster configuration");
  require(static_cast<int>(config.best_replies.size()) == game.players(),
          "dynamics: one best reply per player");
  require(config.forecaster->m == game.total_actions(),
          "dynamics: forecaster dimension does not match the game");
  require(config.T >= 1, "dynamics: T must be positive");
  const std::size_t T = config.T;
  const ConvexDomain X = game.domain();

  WeakCalibratedForecaster forecaster(config.forecaster);
  LearningRun run;
  run.c.reserve(T);
  run.x.reserve(T);
  run.a.reserve(T);
  run.nash_gap.reserve(T);
  run.fp_gap.reserve(T);
  std::vector<Vector> embedded;
  embedded.reserve(T);

  for (std::size_t t = 1; t <= T; ++t) {
    if (config.shared_check_every > 0 && t % config.shared_check_every == 0) {
      WeakCalibratedForecaster other =
          WeakCalibratedForecaster::from_state(config.forecaster, forecaster.state_json());
      if (!same_bits(other.next_forecast(), forecaster.next_forecast())) {
        throw ForecasterAbort(t, "dynamics: shared forecast diverged");
      }
      ++run.diagnostics.shared_checks;
    }
    Vector c;
    try {
      c = forecaster.next_forecast();
    } catch (const NumericalFailure& e) {
      throw ForecasterAbort(t, e.what());
    }
    Vector x(game.total_actions());
    std::vector<int> a(static_cast<std::size_t>(game.players()));
    for (int i = 0; i < game.players(); ++i) {
      Vector xi = config.best_replies[static_cast<std::size_t>(i)](c);
      x.segment(game.offset(i), game.actions(i)) = xi;
      a[static_cast<std::size_t>(i)] =
          sample(xi, counter_uniform(config.seed, t, static_cast<std::uint64_t>(i)));
    }
    Vector ae = game.embed(a);
    forecaster.observe(c, ae);
    run.fp_gap.push_back((x - c).norm());
    run.nash_gap.push_back(eps_nash_check(game, x, 0.0).worst_gap);
    run.c.push_back(std::move(c));
    run.x.push_back(std::move(x));
    run.a.push_back(std::move(a));
    embedded.push_back(std::move(ae));
  }

  for (double e : config.ne_eps) run.ne_fraction.emplace_back(e, run.fraction_in_ne(e));

  LearningDiagnostics& d = run.diagnostics;
  d.fixed_point = forecaster.stats();
  Transcript ta(X);
  ta.reserve(T);
  for (std::size_t t = 0; t < T; ++t) ta.append(run.c[t], embedded[t]);
  SmoothedPath pa = smoothed_path(ta, config.kernel);
  Transcript tx(X);
  tx.reserve(T);
  for (std::size_t t = 0; t < T; ++t) tx.append(run.c[t], run.x[t]);
  SmoothedPath px = smoothed_path(tx, config.kernel);
  double k = 0.0, ax = 0.0, xx = 0.0, cc = 0.0, xc = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    k += (pa.a_bar[t] - pa.c_bar[t]).norm();
    ax += (pa.a_bar[t] - px.a_bar[t]).norm();
    xx += (run.x[t] - px.a_bar[t]).norm();
    cc += (pa.c_bar[t] - run.c[t]).norm();
    xc += (run.x[t] - run.c[t]).norm();
  }
  const double Td = static_cast<double>(T);
  d.k_lambda = k / Td;
  d.ax_gap = ax / Td;
  d.xc_mean = xc / Td;
  d.xc_bound = (xx + ax + k + cc) / Td;
  d.ax_gap_quarter = T >= 4 ? smoothed_gap(X, run.c, embedded, run.x, T / 4, config.kernel) : d.ax_gap;
  std::size_t over = 0;
  for (double g : run.fp_gap) {
    if (g > config.markov_threshold) ++over;
  }
  d.markov_fraction = static_cast<double>(over) / Td;
  d.markov_bound = run.mean_fp_gap(0, T) / config.markov_threshold;
  return run;
}

ConvexDomain ContinuousGame::domain() const {
  require(!action_sets.empty(), "continuous game: no players");
  return ConvexDomain::product(action_sets);
}

int ContinuousGame::offset(int i) const {
  int off = 0;
  for (int j = 0; j < i; ++j) off += action_sets[static_cast<std::size_t>(j)].dim();
  return off;
}

ContinuousGame ContinuousGame::quadratic(double target) {
  ContinuousGame g;
  g.name = "quadratic";
  g.action_sets = {ConvexDomain::unit_box(1)};
  g.payoffs = {[target](const Vector& a) { return -(a[0] - target) * (a[0] - target); }};
  g.lipschitz = 2.0 * std::max(target, 1.0 - target);
  return g;
}

ContinuousGame ContinuousGame::team() {
  ContinuousGame g;
  g.name = "team";
  g.action_sets = {ConvexDomain::unit_box(1), ConvexDomain::unit_box(1)};
  auto u = [](const Vector& a) { return -(a[0] - a[1]) * (a[0] - a[1]); };
  g.payoffs = {u, u};
  g.lipschitz = 2.0 * std::sqrt(2.0);
  return g;
}

ContinuousGame ContinuousGame::zero(int players) {
  require(players >= 1, "continuous game: no players");
  ContinuousGame g;
  g.name = "zero";
  for (int i = 0; i < players; ++i) {
    g.action_sets.push_back(ConvexDomain::unit_box(1));
    g.payoffs.push_back([](const Vector&) { return 0.0; });
  }
  g.lipschitz = 1.0;
  return g;
}

namespace {

struct OwnArgmax {
  Vector best;
  double value;
};

OwnArgmax own_argmax(const ContinuousGame& game, int i, const Vector& profile,
                     const std::vector<Vector>& own_grid) {
  const int off = game.offset(i);
  const int len = game.action_sets[static_cast<std::size_t>(i)].dim();
  Vector p = profile;
  OwnArgmax out{own_grid.front(), -std::numeric_limits<double>::infinity()};
  for (const auto& y : own_grid) {
    p.segment(off, len) = y;
    double v = game.payoffs[static_cast<std::size_t>(i)](p);
    if (v > out.value) {
      out.value = v;
      out.best = y;
    }
  }
  return out;
}

}  // namespace

double pure_nash_gap(const ContinuousGame& game, const Vector& a, double grid_step) {
  require(a.size() == game.domain().dim(), "continuous game: profile dimension mismatch");
  double worst = 0.0;
  for (int i = 0; i < game.players(); ++i) {
    auto grid = game.action_sets[static_cast<std::size_t>(i)].grid(grid_step);
    double cur = game.payoffs[static_cast<std::size_t>(i)](a);
    worst = std::max(worst, own_argmax(game, i, a, grid).value - cur);
  }
  return worst;
}

ContinuousConfig make_continuous_config(const ContinuousGame& game, const DynamicDeskSettings& s,
                                        std::size_t T, std::size_t burn_in, double grid_step) {
  require(grid_step > 0.0, "continuous dynamic: grid step must be positive");
  const ConvexDomain A = game.domain();
  ContinuousConfig cfg;
  cfg.forecaster = std::make_shared<const ForecasterConfig>(desk_config(A, s.forecaster));
  for (int i = 0; i < game.players(); ++i) {
    auto grid = std::make_shared<const std::vector<Vector>>(
        game.action_sets[static_cast<std::size_t>(i)].grid(grid_step));
    OwnPayoff p;
    p.offset = game.offset(i);
    p.length = game.action_sets[static_cast<std::size_t>(i)].dim();
    p.lipschitz = game.lipschitz;
    auto u = game.payoffs[static_cast<std::size_t>(i)];
    p.value = u;
    p.best_reply = [game, i, grid](const Vector& c) { return own_argmax(game, i, c, *grid).best; };
    p.best_value = [game, i, grid](const Vector& c) { return own_argmax(game, i, c, *grid).value; };
    cfg.best_replies.push_back(smooth_best_reply(p, A, s.eps_g, s.br_net_radius));
  }
  cfg.grid_step = grid_step;
  cfg.T = T;
  cfg.burn_in = burn_in;
  return cfg;
}

double ContinuousRun::fraction_in_pne(double eps) const {
  for (const auto& [e, f] : pne_fraction) {
    if (e == eps) return f;
  }
  throw InvalidArgument("continuous run: eps not among the recorded levels");
}

ContinuousRun run_continuous_dynamic(const ContinuousGame& game, const ContinuousConfig& config) {
  require(config.forecaster != nullptr, "continuous dynamic: missing forecaster configuration");
  require(static_cast<int>(config.best_replies.size()) == game.players(),
          "continuous dynamic: one best reply per player");
  require(config.T > config.burn_in, "continuous dynamic: T must exceed the burn-in");
  const ConvexDomain A = game.domain();
  ContinuousRun run;

  // Quasi-concavity spot check along own-action segments at a few probes.
  for (int i = 0; i < game.players(); ++i) {
    const auto& own = game.action_sets[static_cast<std::size_t>(i)];
    const int off = game.offset(i), len = own.dim();
    bool ok = true;
    for (std::uint64_t k = 0; k < 64 && ok; ++k) {
      Vector p(A.dim()), y(len), z(len);
      for (int j = 0; j < A.dim(); ++j) p[j] = counter_uniform(k, static_cast<std::uint64_t>(j), 1);
      p = A.project(p);
      for (int j = 0; j < len; ++j) {
        y[j] = counter_uniform(k, static_cast<std::uint64_t>(j), 2);
        z[j] = counter_uniform(k, static_cast<std::uint64_t>(j), 3);
      }
      y = own.project(y);
      z = own.project(z);
      Vector py = p, pz = p, pm = p;
      py.segment(off, len) = y;
      pz.segment(off, len) = z;
      const auto& u = game.payoffs[static_cast<std::size_t>(i)];
      double lo = std::min(u(py), u(pz));
      for (double s : {0.25, 0.5, 0.75}) {
        pm.segment(off, len) = (1.0 - s) * y + s * z;
        if (u(pm) < lo - 1e-12) ok = false;
      }
    }
    if (!ok) {
      run.warnings.push_back("player " + std::to_string(i) +
                             ": payoff is not quasi-concave in the own action at a probe; "
                             "the guarantee does not apply");
    }
  }

  WeakCalibratedForecaster forecaster(config.forecaster);
  for (std::size_t t = 1; t <= config.T; ++t) {
    Vector c;
    try {
      c = forecaster.next_forecast();
    } catch (const NumericalFailure& e) {
      throw ForecasterAbort(t, e.what());
    }
    Vector a(A.dim());
    for (int i = 0; i < game.players(); ++i) {
      a.segment(game.offset(i), game.action_sets[static_cast<std::size_t>(i)].dim()) =
          config.best_replies[static_cast<std::size_t>(i)](c);
    }
    forecaster.observe(c, a);
    run.pne_gap.push_back(pure_nash_gap(game, a, config.grid_step));
    run.c.push_back(std::move(c));
    run.a.push_back(std::move(a));
  }
  const std::size_t n = config.T - config.burn_in;
  for (double e : config.pne_eps) {
    std::size_t hits = 0;
    for (std::size_t t = config.burn_in; t < config.T; ++t) {
      if (run.pne_gap[t] <= e) ++hits;
    }
    run.pne_fraction.emplace_back(e, static_cast<double>(hits) / static_cast<double>(n));
  }
  return run;
}

ExhaustiveRun run_exhaustive_search(const FiniteGame& game, const std::vector<Vector>& grid,
                                    double eps, std::size_t T, std::uint64_t seed) {
  require(!grid.empty(), "exhaustive search: empty grid");
  require(eps >= 0.0, "exhaustive search: eps must be nonnegative");
  for (int i = 0; i < game.players(); ++i) {
    require(game.actions(i) >= 2, "exhaustive search: every player needs a second action");
  }
  for (const auto& d : grid) game.require_profile(d);

  std::vector<OwnPayoff> own;
  for (int i = 0; i < game.players(); ++i) own.push_back(game.own_payoff(i));

  ExhaustiveRun run;
  // Memory: the current grid point and the last action combination.
  Vector memo_d;
  std::vector<int> memo_a;
  for (std::size_t t = 1; t <= T; ++t) {
    std::vector<int> a(static_cast<std::size_t>(game.players()));
    Vector behavior;
    if (run.locked) {
      behavior = memo_d;
      for (int i = 0; i < game.players(); ++i) {
        a[static_cast<std::size_t>(i)] =
            sample(memo_d.segment(game.offset(i), game.actions(i)),
                   counter_uniform(seed, t, static_cast<std::uint64_t>(i)));
      }
    } else {
      if (t > grid.size()) {
        throw CoverageError("exhaustive search: no grid point is an eps-equilibrium");
      }
      memo_d = grid[t - 1];
      for (int i = 0; i < game.players(); ++i) {
        const OwnPayoff& p = own[static_cast<std::size_t>(i)];
        a[static_cast<std::size_t>(i)] = p.best_value(memo_d) - p.value(memo_d) <= eps ? 0 : 1;
      }
      behavior = game.embed(a);
    }
    memo_a = a;
    if (!run.locked && std::all_of(memo_a.begin(), memo_a.end(), [](int k) { return k == 0; })) {
      run.locked = true;
      run.lock_time = t;
      run.lock_index = t - 1;
      run.profile = memo_d;
    }
    run.actions.push_back(std::move(a));
    run.behavior.push_back(std::move(behavior));
  }
  return run;
}

}  // namespace smoothcal
