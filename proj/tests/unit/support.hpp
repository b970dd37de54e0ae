#pragma once

#include "smoothcal/geometry.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace testsupport {

using smoothcal::Vector;

inline Vector random_in_box(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(m);
  for (int i = 0; i < m; ++i) x[i] = u(rng);
  return x;
}

// Piecewise-linear function of the first coordinate with slopes bounded by
// L, clipped to [0,1] (clipping keeps the Lipschitz bound).
inline smoothcal::WeightFunction random_lipschitz_weight(std::mt19937_64& rng, double L,
                                                         int pieces = 8) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> knots(pieces + 1);
  knots[0] = u(rng);
  for (int i = 1; i <= pieces; ++i) {
    double slope = (2.0 * u(rng) - 1.0) * L;
    knots[i] = knots[i - 1] + slope / pieces;
  }
  smoothcal::WeightFunction w;
  w.name = "random_pl";
  w.lipschitz = L;
  w.fn = [knots, pieces](const Vector& x) {
    double s = std::clamp(x[0], 0.0, 1.0) * pieces;
    int i = std::min(pieces - 1, static_cast<int>(s));
    double v = knots[i] + (knots[i + 1] - knots[i]) * (s - i);
    return std::clamp(v, 0.0, 1.0);
  };
  return w;
}

// Sum of two such functions of different coordinates, halved; Lipschitz in
// the Euclidean norm with the same bound.
inline smoothcal::WeightFunction random_lipschitz_weight_2d(std::mt19937_64& rng, double L) {
  auto a = random_lipschitz_weight(rng, L);
  auto b = random_lipschitz_weight(rng, L);
  smoothcal::WeightFunction w;
  w.name = "random_pl_2d";
  w.lipschitz = L;
  w.fn = [a, b](const Vector& x) {
    Vector y(1);
    y[0] = x[1];
    return 0.5 * (a(x) + b(y));
  };
  return w;
}

}  // namespace testsupport
