#include "smoothcal/scores.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace smoothcal;

namespace {

Vector scalar(double x) {
  Vector v(1);
  v[0] = x;
  return v;
}

// Direct O(T^2) evaluation of the smoothed score, both variants.
SmoothedScores brute_force_scores(const Transcript& tr, const SmoothingKernel& k) {
  const std::size_t T = tr.size();
  double K = 0.0, Kt = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    Vector a = Vector::Zero(tr.dim()), c = Vector::Zero(tr.dim());
    double W = 0.0;
    for (std::size_t s = 0; s < T; ++s) {
      double lam = k(tr.forecast(s), tr.forecast(t));
      W += lam;
      a += lam * tr.action(s);
      c += lam * tr.forecast(s);
    }
    K += (a / W - c / W).norm();
    Kt += (a / W - tr.forecast(t)).norm();
  }
  return {K / T, Kt / T};
}

// Exact-match score by counting, independent of the grouping code.
double brute_force_calibration(const Transcript& tr) {
  double total = 0.0;
  for (std::size_t t = 0; t < tr.size(); ++t) {
    Vector sum = Vector::Zero(tr.dim());
    double n = 0.0;
    for (std::size_t s = 0; s < tr.size(); ++s) {
      if ((tr.forecast(s).array() == tr.forecast(t).array()).all()) {
        sum += tr.action(s);
        n += 1.0;
      }
    }
    total += (sum / n - tr.forecast(t)).norm();
  }
  return total / static_cast<double>(tr.size());
}

// Forecasts on a coarse lattice (so exact matches repeat), binary actions.
Transcript random_transcript(std::mt19937_64& rng, int m, std::size_t T, int levels = 11) {
  Transcript tr(ConvexDomain::unit_box(m));
  std::uniform_int_distribution<int> level(0, levels - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    Vector c(m), a(m);
    for (int i = 0; i < m; ++i) {
      c[i] = level(rng) / static_cast<double>(levels - 1);
      a[i] = u(rng) < c[i] + 0.2 * (u(rng) - 0.5) ? 1.0 : 0.0;
    }
    tr.append(c, a);
  }
  return tr;
}

Transcript intro_scenario() {
  Transcript tr(ConvexDomain::unit_box(1));
  for (int i = 0; i < 200; ++i) tr.append(scalar(0.3001), scalar(i < 10 ? 1.0 : 0.0));
  for (int i = 0; i < 100; ++i) tr.append(scalar(0.2999), scalar(i < 80 ? 1.0 : 0.0));
  return tr;
}

Transcript alternating_vs_threshold(std::size_t T) {
  Transcript tr(ConvexDomain::unit_box(1));
  for (std::size_t t = 1; t <= T; ++t) {
    double c = t % 2 == 1 ? 0.5001 : 0.4999;
    tr.append(scalar(c), scalar(c < 0.5 ? 1.0 : 0.0));
  }
  return tr;
}

}  // namespace

TEST_SUITE("scores") {
  TEST_CASE("transcript rejects points outside the domain and empty scores") {
    Transcript tr(ConvexDomain::unit_box(1));
    CHECK_THROWS_AS(tr.append(scalar(1.1), scalar(0.0)), InvalidArgument);
    CHECK_THROWS_AS(tr.append(scalar(0.5), scalar(-0.5)), InvalidArgument);
    CHECK_NOTHROW(tr.append(scalar(1.0 + 1e-13), scalar(0.0)));
    Transcript empty(ConvexDomain::unit_box(1));
    CHECK_THROWS_AS(calibration_score(empty), InvalidArgument);
    CHECK_THROWS_AS(smoothed_score(empty, SmoothingKernel::tent(0.1)), InvalidArgument);
  }

  TEST_CASE("calibration score examples") {
    Transcript tr(ConvexDomain::unit_box(1));
    for (int t = 0; t < 10; ++t) tr.append(scalar(0.5), scalar(t % 2 == 0 ? 0.0 : 1.0));
    CHECK(calibration_score(tr) == 0.0);

    Transcript intro = intro_scenario();
    double expected = (200.0 / 300.0) * std::abs(0.05 - 0.3001) +
                      (100.0 / 300.0) * std::abs(0.8 - 0.2999);
    CHECK(calibration_score(intro) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(calibration_score(intro) == doctest::Approx(0.3334).epsilon(1e-3));
  }

  TEST_CASE("calibration score matches the counting oracle") {
    std::mt19937_64 rng(11);
    for (int m : {1, 2}) {
      for (int rep = 0; rep < 10; ++rep) {
        Transcript tr = random_transcript(rng, m, 300);
        CHECK(calibration_score(tr) == doctest::Approx(brute_force_calibration(tr)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("indicator kernel reproduces the calibration score bit for bit") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 20; ++rep) {
      Transcript tr = random_transcript(rng, 1 + rep % 2, 200);
      double K = calibration_score(tr);
      CHECK(smoothed_score(tr, SmoothingKernel::indicator()) == K);
      CHECK(smoothed_score(tr, SmoothingKernel::indicator(), SmoothingVariant::action_only) == K);
    }
  }

  TEST_CASE("smoothed score examples") {
    Transcript intro = intro_scenario();
    CHECK(smoothed_score(intro, SmoothingKernel::tent(0.01)) <= 0.01);

    Transcript alt = alternating_vs_threshold(10000);
    CHECK(calibration_score(alt) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(smoothed_score(alt, SmoothingKernel::tent(0.01)) <= 0.01);
  }

  TEST_CASE("smoothed scores match the quadratic oracle") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int m : {1, 2, 3}) {
      for (auto kernel : {SmoothingKernel::tent(0.15), SmoothingKernel::tent(0.5),
                          SmoothingKernel::gaussian(0.1)}) {
        Transcript tr(ConvexDomain::unit_box(m));
        for (int t = 0; t < 150; ++t) {
          Vector c = testsupport::random_in_box(rng, m);
          if (t % 3 == 0 && t > 0) c = tr.forecast(t - 1);  // repeated forecasts
          Vector a(m);
          for (int i = 0; i < m; ++i) a[i] = u(rng) < 0.5 ? 0.0 : 1.0;
          tr.append(c, a);
        }
        SmoothedScores fast = smoothed_scores(tr, kernel);
        SmoothedScores slow = brute_force_scores(tr, kernel);
        CHECK(fast.K == doctest::Approx(slow.K).epsilon(1e-12));
        CHECK(fast.K_tilde == doctest::Approx(slow.K_tilde).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("kernel sanity") {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto kernel : {SmoothingKernel::tent(0.2), SmoothingKernel::tent(1.0),
                        SmoothingKernel::gaussian(0.3), SmoothingKernel::indicator()}) {
      double L = kernel.lipschitz();
      double worst = 0.0;
      for (int i = 0; i < 2000; ++i) {
        Vector c = testsupport::random_in_box(rng, 2);
        CHECK(kernel(c, c) == 1.0);
        Vector p = testsupport::random_in_box(rng, 2);
        Vector q = p + 0.05 * Vector::NullaryExpr(2, [&] { return u(rng); });
        double lp = kernel(p, c), lq = kernel(q, c);
        CHECK(lp >= 0.0);
        CHECK(lp <= 1.0);
        if (kernel.kind() != SmoothingKernel::Kind::indicator) {
          worst = std::max(worst, std::abs(lp - lq) / (p - q).norm());
        }
      }
      CHECK(worst <= L * (1.0 + 1e-9));
    }
    SmoothingKernel tent = SmoothingKernel::tent(0.25);
    CHECK(tent.lipschitz() == 4.0);
    CHECK(tent(scalar(0.25), scalar(0.0)) == 0.0);
    CHECK(tent(scalar(0.2499), scalar(0.0)) > 0.0);
    CHECK(tent.support_radius() == 0.25);
    CHECK_THROWS_AS(SmoothingKernel::tent(0.0), InvalidArgument);
    CHECK_THROWS_AS(SmoothingKernel::gaussian(-1.0), InvalidArgument);
    CHECK(SmoothingKernel::from_json(tent.to_json()).width() == 0.25);
  }

  TEST_CASE("smoothing the difference equals the difference of smoothings") {
    std::mt19937_64 rng(15);
    Transcript tr = random_transcript(rng, 2, 400, 21);
    SmoothingKernel kernel = SmoothingKernel::tent(0.2);
    SmoothedPath path = smoothed_path(tr, kernel);
    std::vector<Vector> residual(tr.size());
    for (std::size_t s = 0; s < tr.size(); ++s) residual[s] = tr.action(s) - tr.forecast(s);
    KernelSums ks = kernel_sums(tr.forecasts(), residual, kernel);
    for (std::size_t t = 0; t < tr.size(); ++t) {
      std::size_t g = ks.group_of[t];
      Vector smoothed = ks.sums.col(static_cast<Eigen::Index>(g)) / ks.weight[g];
      CHECK((path.a_bar[t] - path.c_bar[t] - smoothed).norm() <= 1e-12);
    }
  }

  TEST_CASE("action-only variant stays within the tent width") {
    std::mt19937_64 rng(16);
    for (int rep = 0; rep < 30; ++rep) {
      int m = 1 + rep % 2;
      double delta = 0.05 + 0.3 * (rep % 5) / 4.0;
      Transcript tr = random_transcript(rng, m, 250, 31);
      SmoothedScores s = smoothed_scores(tr, SmoothingKernel::tent(delta));
      CHECK(std::abs(s.K - s.K_tilde) <= delta);
    }
  }

  TEST_CASE("weak score examples") {
    Transcript tr(ConvexDomain::unit_box(1));
    tr.append(scalar(0.4), scalar(1.0));
    WeightFunction zero{"zero", 0.0, [](const Vector&) { return 0.0; }};
    WeightFunction one{"one", 0.0, [](const Vector&) { return 1.0; }};
    WeightFunction ident{"x", 1.0, [](const Vector& c) { return c[0]; }};
    CHECK(weak_score(tr, zero) == 0.0);
    CHECK(weak_score(tr, ident) == doctest::Approx(0.24).epsilon(1e-15));

    Transcript exact(ConvexDomain::unit_box(2));
    std::mt19937_64 rng(17);
    for (int t = 0; t < 50; ++t) {
      Vector c = testsupport::random_in_box(rng, 2);
      exact.append(c, c);
    }
    CHECK(weak_score(exact, one) == 0.0);
  }

  TEST_CASE("indicator bound examples") {
    Transcript tr(ConvexDomain::unit_box(1));
    for (int t = 0; t < 6; ++t) tr.append(scalar(0.5), scalar(t % 2 == 0 ? 0.0 : 1.0));
    IndicatorBound b = indicator_sup_bound(tr);
    CHECK(b.sup_S == 0.0);
    CHECK(b.K == 0.0);

    Transcript one(ConvexDomain::unit_box(1));
    one.append(scalar(0.5), scalar(1.0));
    b = indicator_sup_bound(one);
    CHECK(b.sup_S == 0.5);
    CHECK(b.K == 0.5);
    CHECK(b.K <= 2.0 * b.sup_S);
  }

  TEST_CASE("indicator bound against explicit indicator weights") {
    std::mt19937_64 rng(18);
    for (int rep = 0; rep < 20; ++rep) {
      Transcript tr = random_transcript(rng, 2, 1000, 6);
      IndicatorBound b = indicator_sup_bound(tr);
      // Build each split indicator as an explicit weight function.
      double sup = 0.0;
      for (int i = 0; i < 2; ++i) {
        for (int sign : {1, -1}) {
          std::vector<Vector> members;
          for (std::size_t t = 0; t < tr.size(); ++t) {
            Vector sum = Vector::Zero(2);
            double n = 0.0;
            for (std::size_t s = 0; s < tr.size(); ++s) {
              if ((tr.forecast(s).array() == tr.forecast(t).array()).all()) {
                sum += tr.action(s);
                n += 1.0;
              }
            }
            double gap = sum[i] / n - tr.forecast(t)[i];
            if (sign * gap > 0.0) members.push_back(tr.forecast(t));
          }
          WeightFunction w{"split", 0.0, [members](const Vector& c) {
                             for (const auto& p : members) {
                               if ((p.array() == c.array()).all()) return 1.0;
                             }
                             return 0.0;
                           }};
          sup = std::max(sup, weak_score(tr, w));
        }
      }
      CHECK(b.sup_S == doctest::Approx(sup).epsilon(1e-12));
      CHECK(b.K <= 2.0 * 2.0 * b.sup_S + 1e-15);
    }
  }

  TEST_CASE("averaging bound") {
    SmoothingKernel tent = SmoothingKernel::tent(0.1);
    std::vector<Vector> c(50, scalar(0.3)), zero(50, scalar(0.0));
    AveragingBound z = averaging_bound(c, zero, tent, 1.0);
    CHECK(z.lhs == 0.0);
    CHECK(z.holds());

    std::vector<Vector> b(50, scalar(-0.7));
    AveragingBound rep = averaging_bound(c, b, tent, 1.0);
    CHECK(rep.lhs == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(rep.kappa == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(rep.rhs >= 0.7);

    CHECK(averaging_constant(1, 1.0) == doctest::Approx(8.0).epsilon(1e-15));
    CHECK(averaging_constant(2, 1.0) == doctest::Approx(2.0 * std::pow(2.0, 2.5) * std::sqrt(2.0))
                                            .epsilon(1e-15));

    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SmoothingKernel wide = SmoothingKernel::tent(0.1);
    for (int sweep = 0; sweep < 20; ++sweep) {
      std::vector<Vector> f, r;
      double bias = 0.1 * sweep / 19.0;
      for (int t = 0; t < 500; ++t) {
        f.push_back(scalar(u(rng)));
        r.push_back(scalar(std::clamp(u(rng) - 0.5 + bias, -1.0, 1.0)));
      }
      AveragingBound ab = averaging_bound(f, r, wide, 1.0);
      // lhs oracle by direct double loop
      double lhs = 0.0;
      for (int t = 0; t < 500; ++t) {
        double B = 0.0, W = 0.0;
        for (int s = 0; s < 500; ++s) {
          double lam = wide(f[s], f[t]);
          B += lam * r[s][0];
          W += lam;
        }
        lhs += std::abs(B) / W;
      }
      CHECK(ab.lhs == doctest::Approx(lhs / 500.0).epsilon(1e-12));
      CHECK(ab.holds());
    }
    CHECK_THROWS_AS(averaging_bound(c, std::vector<Vector>(50, scalar(1.5)), tent, 1.0),
                    InvalidArgument);
  }

  TEST_CASE("calibration implies smooth calibration on random transcripts") {
    std::mt19937_64 rng(20);
    for (int rep = 0; rep < 100; ++rep) {
      int m = 1 + rep % 2;
      Transcript tr = random_transcript(rng, m, 300, 9);
      SmoothingKernel kernel = SmoothingKernel::tent(0.2 + 0.1 * (rep % 4));
      double gamma = averaging_constant(m, tr.domain().diameter());
      double rhs = gamma * std::pow(kernel.lipschitz(), m / 2.0) * std::sqrt(calibration_score(tr));
      CHECK(smoothed_score(tr, kernel) <= rhs);
    }
  }

  TEST_CASE("conversion constants") {
    auto ws = conversion_constants(ConversionDirection::weak_to_smooth, 0.01, 1.0, 1, 4.0);
    CHECK(ws.eps_prime == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(ws.L_prime == 1.0);

    auto sw = conversion_constants(ConversionDirection::smooth_to_weak, 0.04, 4.0, 1);
    CHECK(sw.eps1 == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(sw.L_prime == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(sw.L_prime == doctest::Approx(std::sqrt(0.04 * std::pow(4.0, 3.0)) / 2.0).epsilon(1e-15));
    CHECK(sw.eps_prime == doctest::Approx(1.2).epsilon(1e-15));

    CHECK(conversion_constants(ConversionDirection::weak_to_smooth, 0.0, 2.0, 2, 4.0).eps_prime ==
          0.0);
    CHECK(conversion_constants(ConversionDirection::smooth_to_weak, 0.0, 2.0, 2).eps_prime == 0.0);
    CHECK_THROWS_AS(conversion_constants(ConversionDirection::smooth_to_weak, 0.1, 0.5, 1),
                    InvalidArgument);
  }

  TEST_CASE("transcript CSV round trip is bit-identical") {
    std::mt19937_64 rng(21);
    Transcript tr(ConvexDomain::unit_box(2));
    for (int t = 0; t < 100; ++t) {
      tr.append(testsupport::random_in_box(rng, 2), testsupport::random_in_box(rng, 2));
    }
    std::stringstream ss;
    tr.write_csv(ss);
    Transcript back = Transcript::read_csv(ss, ConvexDomain::unit_box(2));
    CHECK(back == tr);

    std::stringstream bad("t,c_1,a_1\n1,0.5\n");
    CHECK_THROWS_AS(Transcript::read_csv(bad, ConvexDomain::unit_box(1)), InvalidArgument);
  }

  TEST_CASE("weight presets stay in [0,1] with their Lipschitz bound") {
    std::mt19937_64 rng(22);
    auto presets = weight_presets(ConvexDomain::unit_box(2));
    CHECK(presets.size() == 4);
    for (const auto& w : presets) {
      for (int i = 0; i < 500; ++i) {
        Vector p = testsupport::random_in_box(rng, 2), q = testsupport::random_in_box(rng, 2);
        CHECK(w(p) >= 0.0);
        CHECK(w(p) <= 1.0);
        CHECK(std::abs(w(p) - w(q)) <= w.lipschitz * (p - q).norm() + 1e-12);
      }
    }
  }
}
