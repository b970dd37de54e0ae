#include "smoothcal/online_regression.hpp"
#include "smoothcal/weak_calibration.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace smoothcal;

namespace {

Vector scalar(double x) {
  Vector v(1);
  v[0] = x;
  return v;
}

std::shared_ptr<const ForecasterConfig> coordinate_only(double lambda, std::size_t R) {
  auto unit = ConvexDomain::unit_box(1);
  auto pou = std::make_shared<const PartitionOfUnity>(unit, maximal_net(unit, 0.6));
  auto basis = std::make_shared<const BasisFamily>(pou, 0, 1.0, 1.0);
  return std::make_shared<const ForecasterConfig>(
      make_forecaster_config(basis, 0.1, 1.0, lambda, R));
}

std::shared_ptr<const ForecasterConfig> small_desk(int m = 1, double lambda = 0.9,
                                                   std::size_t R = 50) {
  DeskSettings s;
  s.m = m;
  s.net_radius = m == 1 ? 0.05 : 0.15;
  s.lambda = lambda;
  s.R = R;
  return std::make_shared<const ForecasterConfig>(desk_config(s));
}

// Smallest root of g on [lo, hi] by scanning then bisecting.
double bisect_root(const std::function<double(double)>& g, double lo, double hi) {
  const int n = 1000;
  double a = lo, ga = g(lo);
  if (ga == 0.0) return lo;
  for (int i = 1; i <= n; ++i) {
    double x = lo + (hi - lo) * i / n;
    double gx = g(x);
    if ((ga <= 0.0) != (gx <= 0.0) || gx == 0.0) {
      double b = x;
      for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (a + b);
        if ((g(mid) <= 0.0) == (ga <= 0.0)) {
          a = mid;
        } else {
          b = mid;
        }
      }
      return 0.5 * (a + b);
    }
    a = x;
    ga = gx;
  }
  return std::nan("");
}

void feed_random(WeakCalibratedForecaster& f, std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int m = f.config().m;
  for (int i = 0; i < n; ++i) {
    Vector c = testsupport::random_in_box(rng, m);
    Vector a(m);
    for (int j = 0; j < m; ++j) a[j] = u(rng) < 0.5 ? 0.0 : 1.0;
    f.observe(c, a);
  }
}

}  // namespace

TEST_SUITE("weak_calibration") {
  TEST_CASE("derived constants") {
    auto cfg = small_desk();
    const double m = cfg->m, d = cfg->d;
    CHECK(cfg->eps1 == doctest::Approx(cfg->eps / (2.0 * std::sqrt(m))).epsilon(1e-15));
    CHECK(cfg->eps2 ==
          doctest::Approx(cfg->eps / (m + m * (1 + d) * (1 + d) + d * d)).epsilon(1e-15));
    CHECK(cfg->eps3 == doctest::Approx(cfg->eps2 * cfg->eps2).epsilon(1e-15));
    CHECK(cfg->eps4 == doctest::Approx(cfg->eps / (cfg->L * std::sqrt(m) + 1.0)).epsilon(1e-15));
    CHECK(cfg->K == doctest::Approx(d * cfg->lambda / (1.0 - cfg->lambda)).epsilon(1e-15));
    CHECK(cfg->consistent());
    ForecasterConfig tampered = *cfg;
    tampered.eps4 *= 1.0 + 1e-15;
    CHECK_FALSE(tampered.consistent());
    CHECK_THROWS_AS(desk_config(DeskSettings{1, 0.05, 0.5, 0.05, 0.9, 10}), InvalidArgument);
    CHECK(cfg->hash() == small_desk()->hash());
    CHECK(cfg->hash() != small_desk(1, 0.8)->hash());
  }

  TEST_CASE("theory constants are reported, not instantiated") {
    TheoryConstants t = theory_constants(ConvexDomain::unit_box(1), 1.0, 1.0);
    CHECK(t.basis_dim > 1000);
    CHECK(t.eps1 == 0.5);
    const double d = static_cast<double>(t.basis_dim);
    CHECK(t.eps2 == doctest::Approx(1.0 / (1.0 + (1 + d) * (1 + d) + d * d)).epsilon(1e-15));
    CHECK(t.eps4 == 0.5);
    CHECK_FALSE(t.k.has_value());
    CHECK_FALSE(t.note.empty());
  }

  TEST_CASE("empty window gives H = 0 and the forecast 0") {
    auto cfg = small_desk();
    WeakCalibratedForecaster f(cfg);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
      CHECK(f.eval_H(testsupport::random_in_box(rng, 1) * 4.0 - Vector::Constant(1, 2.0)).norm() ==
            0.0);
    }
    FixedPointResult fp = f.solve_fixed_point();
    CHECK(fp.b.norm() == 0.0);
    CHECK(fp.residual == 0.0);
    CHECK(f.next_forecast()[0] == 0.0);
  }

  TEST_CASE("scalar hand evaluation of H") {
    auto cfg = coordinate_only(0.5, 2);
    REQUIRE(cfg->d == 1);
    WeakCalibratedForecaster f(cfg);
    f.observe(scalar(0.5), scalar(1.0));
    for (double c : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0}) {
      double expected = c * (0.5 * 0.5) / (1.0 + 0.5 * 0.25 + c * c);
      CHECK(f.eval_H(scalar(c))[0] == doctest::Approx(expected).epsilon(1e-14));
    }
    // Outside C the point is projected first.
    CHECK(f.eval_H(scalar(3.0))[0] == f.eval_H(scalar(1.0))[0]);
    CHECK(f.eval_H(scalar(-2.0))[0] == 0.0);
    FixedPointResult fp = f.solve_fixed_point();
    CHECK(std::abs(fp.b[0]) <= 1e-8);
  }

  TEST_CASE("fixed point matches a bisection oracle") {
    // One net center covering [0,1]: features (c, 1), an affine fit.
    DeskSettings s;
    s.net_radius = 0.6;
    s.lambda = 0.9;
    s.R = 40;
    auto cfg = std::make_shared<const ForecasterConfig>(desk_config(s));
    REQUIRE(cfg->d == 2);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
      WeakCalibratedForecaster f(cfg);
      double p = u(rng);
      for (int i = 0; i < 39; ++i) {
        f.observe(scalar(u(rng)), scalar(u(rng) < p ? 1.0 : 0.0));
      }
      FixedPointResult fp = f.solve_fixed_point();
      CHECK(fp.residual <= 1e-8);
      double c = std::clamp(fp.b[0], 0.0, 1.0);
      double oracle = bisect_root(
          [&](double x) { return std::clamp(f.eval_H_direct(scalar(x))[0], 0.0, 1.0) - x; }, 0.0,
          1.0);
      CHECK(c == doctest::Approx(oracle).epsilon(1e-8));
    }
  }

  TEST_CASE("Sherman-Morrison H agrees with the direct solve and stays within K") {
    std::mt19937_64 rng(3);
    for (int m : {1, 2}) {
      auto cfg = small_desk(m, 0.8, 30);
      WeakCalibratedForecaster f(cfg);
      feed_random(f, rng, 45);
      for (int i = 0; i < 1000; ++i) {
        Vector c = 3.0 * testsupport::random_in_box(rng, m) - Vector::Ones(m);
        Vector h = f.eval_H(c);
        CHECK((h - f.eval_H_direct(c)).lpNorm<Eigen::Infinity>() <= 1e-12);
        CHECK(h.lpNorm<Eigen::Infinity>() <= cfg->K);
      }
    }
  }

  TEST_CASE("H is the windowed regression prediction at the candidate") {
    std::mt19937_64 rng(4);
    auto cfg = small_desk(1, 0.85, 25);
    WeakCalibratedForecaster f(cfg);
    RegressionParams p;
    p.variant = RegressionVariant::windowed;
    p.d = cfg->d;
    p.a = 1.0;
    p.lambda = cfg->lambda;
    p.R = cfg->R;
    OnlineRegressor reg(p);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 120; ++t) {
      Vector c = scalar(u(rng));
      Vector x = cfg->basis->features(c);
      const Vector& theta = reg.predict(x);
      CHECK(theta.dot(x) == doctest::Approx(f.eval_H(c)[0]).epsilon(1e-10));
      double a = u(rng) < 0.3 ? 1.0 : 0.0;
      reg.update(x, a);
      f.observe(c, scalar(a));
    }
  }

  TEST_CASE("forecasts: clamp then snap, grid membership, stationarity") {
    auto unit = ConvexDomain::unit_box(1);
    CHECK(unit.snap(unit.project(scalar(1.2)), 0.1)[0] == 1.0);

    auto cfg = small_desk(1, 0.9, 30);
    auto grid = cfg->domain().grid(cfg->eps4);
    std::mt19937_64 rng(5);
    WeakCalibratedForecaster a(cfg), b(cfg);
    feed_random(a, rng, 100);  // a has a longer past; only the window matters
    for (const auto& e : a.window()) b.observe(e.c, e.a);
    CHECK(a.periods() != b.periods());
    for (int t = 0; t < 50; ++t) {
      Vector ca = a.next_forecast();
      Vector cb = b.next_forecast();
      CHECK(ca[0] == cb[0]);
      CHECK(a.next_forecast()[0] == ca[0]);
      bool on_grid = false;
      for (const auto& g : grid) on_grid = on_grid || g[0] == ca[0];
      CHECK(on_grid);
      Vector act = scalar(ca[0] < 0.4 ? 1.0 : 0.0);
      a.observe(ca, act);
      b.observe(cb, act);
    }
  }

  TEST_CASE("window maintenance") {
    auto cfg = small_desk(1, 0.9, 5);
    WeakCalibratedForecaster f(cfg);
    std::mt19937_64 rng(6);
    feed_random(f, rng, 3);
    CHECK(f.window().size() == 3);
    feed_random(f, rng, 10);
    CHECK(f.window().size() == 4);
    std::vector<BasisFamily::Entry> x;
    for (const auto& e : f.window()) {
      cfg->basis->sparse_features(e.c, x);
      const auto& fx = f.features(e);
      REQUIRE(x.size() == fx.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(x[i].index == fx[i].index);
        CHECK(x[i].value == fx[i].value);
      }
    }
    Vector oldest = f.window().front().c;
    Vector second = f.window()[1].c;
    f.observe(scalar(0.5), scalar(1.0));
    CHECK(f.window().front().c[0] == second[0]);
    CHECK(f.window().front().c[0] != oldest[0]);

    WeakCalibratedForecaster two(small_desk(1, 0.9, 2));
    for (int i = 0; i < 5; ++i) {
      two.observe(scalar(0.1 * i), scalar(1.0));
      CHECK(two.window().size() == 1);
    }
    WeakCalibratedForecaster one(small_desk(1, 0.9, 1));
    one.observe(scalar(0.3), scalar(1.0));
    CHECK(one.window().empty());
    CHECK_THROWS_AS(f.observe(scalar(0.5), scalar(1.5)), InvalidArgument);
  }

  TEST_CASE("fixed-point residual over a long simulated run") {
    auto cfg = small_desk(1, 0.95, 100);
    WeakCalibratedForecaster f(cfg);
    std::size_t fine = 0;
    double worst = 0.0;
    for (std::size_t t = 1; t <= 5000; ++t) {
      Vector c = f.next_forecast();
      fine += f.last_fixed_point().residual <= 1e-8 ? 1 : 0;
      worst = std::max(worst, f.last_fixed_point().residual);
      // leaky threshold response: the hardest case for plain iteration
      f.observe(c, scalar(c[0] < 0.5 ? 1.0 : 0.0));
    }
    CHECK(fine == 5000);
    CHECK(worst <= 1e-8);
    CHECK(f.stats().periods == 5000);
  }

  TEST_CASE("two-dimensional forecaster solves its fixed points") {
    auto cfg = small_desk(2, 0.9, 40);
    WeakCalibratedForecaster f(cfg);
    for (std::size_t t = 1; t <= 400; ++t) {
      Vector c = f.next_forecast();
      CHECK(f.last_fixed_point().residual <= 1e-8);
      CHECK(cfg->domain().contains(c));
      Vector a(2);
      a << (c[0] < 0.5 ? 1.0 : 0.0), (c[1] < 0.3 ? 1.0 : 0.0);
      f.observe(c, a);
    }
  }

  TEST_CASE("state round trip reproduces the forecaster") {
    auto cfg = small_desk(1, 0.9, 30);
    WeakCalibratedForecaster f(cfg);
    std::mt19937_64 rng(7);
    feed_random(f, rng, 60);
    nlohmann::json state = nlohmann::json::parse(f.state_json().dump());
    WeakCalibratedForecaster g = WeakCalibratedForecaster::from_state(cfg, state);
    CHECK(g.periods() == f.periods());
    CHECK(g.next_forecast()[0] == f.next_forecast()[0]);
    CHECK(g.eval_H(scalar(0.42))[0] == f.eval_H(scalar(0.42))[0]);
    CHECK_THROWS_AS(WeakCalibratedForecaster::from_state(small_desk(1, 0.8, 30), state),
                    InvalidArgument);
  }
}
