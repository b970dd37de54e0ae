#include "smoothcal/game_dynamics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace smoothcal;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Gap of player i against a fine grid of own mixed actions (2 actions).
double brute_gap(const FiniteGame& g, int i, const Vector& x) {
  double best = -1e300;
  Vector y = x;
  for (int k = 0; k <= 1000; ++k) {
    double p = k / 1000.0;
    y.segment(g.offset(i), 2) = vec({p, 1.0 - p});
    best = std::max(best, g.expected(i, y));
  }
  return best - g.expected(i, x);
}

DynamicDeskSettings quick_settings() {
  DynamicDeskSettings s;
  s.forecaster.lambda = 0.98;
  s.forecaster.R = 200;
  return s;
}

}  // namespace

TEST_SUITE("game_dynamics") {
  TEST_CASE("eps-Nash check on the presets") {
    auto pd = FiniteGame::preset("prisoners_dilemma");
    NashCheck dd = eps_nash_check(pd, vec({0, 1, 0, 1}), 0.0);
    CHECK(dd.member);
    CHECK(dd.worst_gap == 0.0);
    CHECK_FALSE(eps_nash_check(pd, vec({1, 0, 1, 0}), 1.0).member);

    auto mp = FiniteGame::preset("matching_pennies");
    NashCheck mixed = eps_nash_check(mp, vec({0.5, 0.5, 0.5, 0.5}), 0.0);
    CHECK(mixed.member);
    CHECK(mixed.worst_gap == 0.0);
    NashCheck off = eps_nash_check(mp, vec({0.6, 0.4, 0.5, 0.5}), 0.1);
    CHECK(off.gaps[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(off.gaps[1] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK_FALSE(off.member);
    CHECK_THROWS_AS(eps_nash_check(mp, vec({0.5, 0.5, 0.5}), 0.1), InvalidArgument);
    CHECK_THROWS_AS(eps_nash_check(mp, vec({0.7, 0.5, 0.5, 0.5}), 0.1), InvalidArgument);
  }

  TEST_CASE("pure deviations give the exact gap") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> t1(4), t2(4);
      for (auto& v : t1) v = u(rng);
      for (auto& v : t2) v = u(rng);
      FiniteGame g("random", {2, 2}, {t1, t2});
      double r = p(rng), c = p(rng);
      if (rep % 4 == 0) r = std::round(r * 1000) / 1000;  // own action on the oracle grid
      Vector x = vec({r, 1 - r, c, 1 - c});
      NashCheck chk = eps_nash_check(g, x, 0.0);
      for (int i = 0; i < 2; ++i) CHECK(std::abs(chk.gaps[i] - brute_gap(g, i, x)) <= 1e-9);
    }
  }

  TEST_CASE("game json round trip and validation") {
    auto g = FiniteGame::preset("shapley");
    auto back = FiniteGame::from_json(g.to_json());
    CHECK(back.to_json() == g.to_json());
    CHECK(back.total_actions() == 6);
    CHECK(back.payoff_bound() == 1.0);
    auto bad = g.to_json();
    bad["extra"] = 1;
    CHECK_THROWS_AS(FiniteGame::from_json(bad), InvalidArgument);
    auto short_table = g.to_json();
    short_table["payoffs"][0].erase(0);
    CHECK_THROWS_AS(FiniteGame::from_json(short_table), InvalidArgument);
    CHECK_THROWS_AS(FiniteGame::preset("chess"), InvalidArgument);
  }

  TEST_CASE("best replies read only the own payoff") {
    auto a = FiniteGame::preset("coordination");
    FiniteGame b("other", {2, 2}, {{1, 0, 0, 1}, {-3, 7, 2, 0.5}});
    auto X = a.domain();
    auto ga = smooth_best_reply(a.own_payoff(0), X, 0.2, 0.1);
    auto gb = smooth_best_reply(b.own_payoff(0), X, 0.2, 0.1);
    for (const auto& c : X.grid(0.05)) CHECK(ga(c) == gb(c));
  }

  TEST_CASE("dynamic schedule identities") {
    DynamicSchedule s = tune_dynamic_parameters(0.1, {2, 2}, 1.0);
    CHECK(s.m == 4);
    CHECK(s.n == 2);
    const double ulp4 = 4.0 * std::numeric_limits<double>::epsilon();
    CHECK(std::abs(s.eps5 - 3.0 * s.eps) <= ulp4 * 3.0 * s.eps);
    CHECK(std::abs(s.eps3 - 3.0 * s.eps * s.eps4) <= ulp4 * 3.0 * s.eps * s.eps4);
    CHECK(s.eps_c == s.eps * s.eps4);
    CHECK(s.eps2 == s.eps_c);
    CHECK(s.eps1 > 0.0);

    DynamicSchedule two = tune_dynamic_parameters(0.5, {2}, 1.0);
    const double nu2 = std::pow(std::sqrt(2.0), 3) * std::pow(4.0, 4) * std::pow(6.0, 3);
    CHECK(two.L_g == doctest::Approx(nu2 * std::pow(std::sqrt(2.0) * 2.0, 3)).epsilon(1e-14));
    CHECK(two.eps4 == doctest::Approx(2.0 * 0.5 / (std::sqrt(2.0) * two.L_g)).epsilon(1e-14));
    CHECK_THROWS_AS(tune_dynamic_parameters(0.0, {2}, 1.0), InvalidArgument);
  }

  TEST_CASE("dominant action: play is a Nash equilibrium throughout") {
    FiniteGame g("dominant", {2}, {{0.0, 1.0}});
    auto s = quick_settings();
    DynamicConfig cfg = make_dynamic_config(g, s, 1500, 3);
    LearningRun r = run_smooth_calibrated_learning(g, cfg);
    CHECK(r.fraction_in_ne(s.eps_g + 1e-9) == 1.0);
    for (const auto& x : r.x) CHECK((x - vec({0.0, 1.0})).norm() <= 1e-12);
    CHECK(r.diagnostics.shared_checks == 1);
  }

  TEST_CASE("learning run: determinism, monotone occupancy, diagnostics") {
    auto g = FiniteGame::preset("coordination");
    auto s = quick_settings();
    DynamicConfig cfg = make_dynamic_config(g, s, 2000, 7);
    LearningRun r1 = run_smooth_calibrated_learning(g, cfg);
    LearningRun r2 = run_smooth_calibrated_learning(g, cfg);
    CHECK(r1.a == r2.a);
    CHECK(r1.nash_gap == r2.nash_gap);
    cfg.seed = 8;
    LearningRun r3 = run_smooth_calibrated_learning(g, cfg);
    CHECK(r3.c.size() == 2000);

    for (std::size_t k = 1; k < r1.ne_fraction.size(); ++k) {
      CHECK(r1.ne_fraction[k].first > r1.ne_fraction[k - 1].first);
      CHECK(r1.ne_fraction[k].second >= r1.ne_fraction[k - 1].second);
    }
    const auto& d = r1.diagnostics;
    CHECK(d.shared_checks == 2);
    CHECK(d.xc_mean <= d.xc_bound + 1e-12);
    CHECK(d.markov_fraction <= d.markov_bound + 1e-12);
    CHECK(d.k_lambda <= 0.1);
    for (std::size_t t = 0; t < r1.c.size(); ++t) {
      CHECK(g.domain().contains(r1.c[t], 1e-12));
      CHECK((r1.x[t] - r1.c[t]).norm() == r1.fp_gap[t]);
    }
  }

  TEST_CASE("exhaustive search") {
    auto pd = FiniteGame::preset("prisoners_dilemma");
    auto grid = pd.domain().grid(0.25);
    ExhaustiveRun r = run_exhaustive_search(pd, grid, 0.0, grid.size() + 10, 1);
    REQUIRE(r.locked);
    CHECK(r.profile == vec({0, 1, 0, 1}));
    CHECK(r.lock_index + 1 == r.lock_time);
    for (std::size_t t = r.lock_time; t < r.actions.size(); ++t) {
      CHECK(r.actions[t] == std::vector<int>{1, 1});
    }

    auto mp = FiniteGame::preset("matching_pennies");
    auto mgrid = mp.domain().grid(0.25);
    ExhaustiveRun m = run_exhaustive_search(mp, mgrid, 0.0, mgrid.size(), 1);
    REQUIRE(m.locked);
    CHECK(m.profile == vec({0.5, 0.5, 0.5, 0.5}));
    for (std::size_t t = 0; t + 1 < m.lock_time; ++t) {
      CHECK(m.actions[t] != std::vector<int>{0, 0});
    }

    std::vector<Vector> pure = {vec({1, 0, 1, 0}), vec({1, 0, 0, 1}), vec({0, 1, 1, 0}),
                                vec({0, 1, 0, 1})};
    CHECK_THROWS_AS(run_exhaustive_search(mp, pure, 0.1, 10, 1), CoverageError);
    ExhaustiveRun short_run = run_exhaustive_search(mp, pure, 0.1, 3, 1);
    CHECK_FALSE(short_run.locked);
  }

  TEST_CASE("continuous dynamic") {
    DynamicDeskSettings s;
    s.eps_g = 0.05;
    s.br_net_radius = 0.05;
    s.forecaster = DeskSettings{};
    {
      auto game = ContinuousGame::quadratic(0.3);
      auto cfg = make_continuous_config(game, s, 3000, 1000);
      ContinuousRun r = run_continuous_dynamic(game, cfg);
      CHECK(r.warnings.empty());
      CHECK(r.fraction_in_pne(0.1) >= 0.9);
      CHECK(std::abs(r.a.back()[0] - 0.3) <= 0.05);
    }
    {
      auto game = ContinuousGame::zero(2);
      auto cfg = make_continuous_config(game, s, 500, 100);
      cfg.pne_eps = {0.0};
      ContinuousRun r = run_continuous_dynamic(game, cfg);
      CHECK(r.fraction_in_pne(0.0) == 1.0);
    }
    {
      auto game = ContinuousGame::quadratic(0.5);
      game.payoffs[0] = [](const Vector& a) { return (a[0] - 0.5) * (a[0] - 0.5); };
      auto cfg = make_continuous_config(game, s, 50, 10);
      ContinuousRun r = run_continuous_dynamic(game, cfg);
      CHECK_FALSE(r.warnings.empty());
    }
    CHECK(pure_nash_gap(ContinuousGame::team(), vec({0.4, 0.4}), 1.0 / 256) == 0.0);
    CHECK(pure_nash_gap(ContinuousGame::team(), vec({0.0, 1.0}), 1.0 / 256) == 1.0);
  }
}
