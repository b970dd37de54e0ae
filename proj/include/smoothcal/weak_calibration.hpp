#pragma once

#include "smoothcal/geometry.hpp"
#include "smoothcal/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace smoothcal {

struct FixedPointOptions {
  double tol = 1e-8;
  double coarse_tol = 1e-3;
  double eta = 0.5;
  int max_iterations = 10000;
  // A start is abandoned when its best residual fails to halve within this
  // many iterations.
  int stagnation_window = 25;
};

// Everything the forecaster needs; derived accuracies follow the weak
// calibration construction for the given (eps, L, m, d).
struct ForecasterConfig {
  std::string profile = "desk";
  std::shared_ptr<const BasisFamily> basis;
  double eps = 0.1;
  double L = 1.0;
  int m = 1;
  int d = 1;
  double eps1 = 0.0;  // basis approximation accuracy, eps / (2 sqrt m)
  double eps2 = 0.0;  // eps / (m + m (1+d)^2 + d^2)
  double eps3 = 0.0;  // eps2^2, regression accuracy
  double eps4 = 0.0;  // grid step, eps / (L sqrt m + 1)
  double lambda = 0.5;
  std::size_t R = 2;
  double K = 0.0;     // fixed-point box bound d lambda / (1 - lambda)
  FixedPointOptions fixed_point;

  const ConvexDomain& domain() const { return basis->domain(); }

  // Recomputes the derived constants and compares them bit for bit.
  bool consistent() const;
  nlohmann::json to_json() const;
  std::string hash() const;
};

// Builds a configuration from an explicit basis and regression window.
ForecasterConfig make_forecaster_config(std::shared_ptr<const BasisFamily> basis, double eps,
                                        double L, double lambda, std::size_t R,
                                        std::string profile = "desk");

// Desk profile: C = [0,1]^m, coordinate functions plus a partition basis
// over a net of the given radius.
struct DeskSettings {
  int m = 1;
  double eps = 0.05;
  double L = 4.0;
  double net_radius = 0.05;
  double lambda = 0.995;
  std::size_t R = 1000;
};
ForecasterConfig desk_config(const DeskSettings& s = {});
ForecasterConfig desk_config(const ConvexDomain& domain, const DeskSettings& s);

// Constants of the full construction. The basis dimension and the tuned
// regression window are astronomically large for any useful eps, so they
// are reported rather than instantiated: `basis_dim` comes from the basis
// lemma (possibly above the cap), and the tuning fields stay empty when
// the required discount is not representable in double precision.
struct TheoryConstants {
  double eps = 0.0;
  double L = 0.0;
  int m = 0;
  std::size_t basis_dim = 0;
  double eps1 = 0.0;
  double eps2 = 0.0;
  double eps3 = 0.0;
  double eps4 = 0.0;
  std::optional<int> k;  // lambda = 1 - 2^-k
  std::optional<std::size_t> R;
  std::optional<double> K;
  std::string note;

  nlohmann::json to_json() const;
};
TheoryConstants theory_constants(const ConvexDomain& domain, double eps, double L);

// One of the last R-1 (forecast, action) pairs. Entries with bitwise equal
// forecasts share a group holding F(c).
struct WindowEntry {
  Vector c;
  Vector a;
  int group = -1;
};

struct FixedPointResult {
  Vector b;
  double residual = 0.0;
  int start = 0;  // 0 = origin, 1.. = corners, -1 = fallback search
  int iterations = 0;
  bool coarse = false;
};

struct FixedPointStats {
  std::size_t periods = 0;
  std::size_t fine = 0;       // residual <= tol
  std::size_t coarse = 0;     // accepted by the coarse tolerance
  std::size_t fallbacks = 0;  // needed the deterministic search
  double worst_residual = 0.0;

  nlohmann::json to_json() const;
};

class WeakCalibratedForecaster {
 public:
  explicit WeakCalibratedForecaster(std::shared_ptr<const ForecasterConfig> config);

  const ForecasterConfig& config() const { return *cfg_; }
  std::shared_ptr<const ForecasterConfig> config_ptr() const { return cfg_; }
  const std::deque<WindowEntry>& window() const { return window_; }
  // Sparse F(c) of a window entry.
  const std::vector<BasisFamily::Entry>& features(const WindowEntry& e) const {
    return groups_[static_cast<std::size_t>(e.group)].x;
  }
  std::size_t periods() const { return periods_; }
  const FixedPointStats& stats() const { return stats_; }

  // H at any point of R^m (projected onto C first).
  Vector eval_H(const Vector& c) const;
  // Same quantity by one dense SPD solve per coordinate.
  Vector eval_H_direct(const Vector& c) const;

  FixedPointResult solve_fixed_point() const;

  // Grid point nearest to the projected fixed point. Depends only on the
  // window; repeated calls return the same value.
  const Vector& next_forecast();
  const FixedPointResult& last_fixed_point() const { return last_fp_; }

  // Records (c_t, a_t); a_t must lie in C.
  void observe(const Vector& c, const Vector& a);

  nlohmann::json state_json() const;
  static WeakCalibratedForecaster from_state(std::shared_ptr<const ForecasterConfig> config,
                                             const nlohmann::json& state);

 private:
  void prepare() const;
  double residual(const Vector& b, Vector& h) const;
  FixedPointResult damped(const Vector& start, int label) const;
  FixedPointResult search() const;

  struct Group {
    std::vector<BasisFamily::Entry> x;
    std::size_t refs = 0;
    // Scratch for prepare(): summed weights and weighted actions.
    double weight = 0.0;
    Vector a_sum;
    std::size_t epoch = 0;
  };

  std::shared_ptr<const ForecasterConfig> cfg_;
  std::deque<WindowEntry> window_;
  mutable std::vector<Group> groups_;
  std::vector<int> free_groups_;
  std::unordered_map<std::string, int> group_of_;
  mutable std::size_t epoch_ = 0;
  mutable std::vector<int> order_;
  std::size_t periods_ = 0;
  FixedPointStats stats_;

  // Per-window cache: M = (I + sum lambda^age x x')^{-1}, W = M V.
  mutable bool prepared_ = false;
  mutable Matrix M_;
  mutable Matrix W_;
  mutable std::vector<BasisFamily::Entry> scratch_;

  std::optional<Vector> forecast_;
  FixedPointResult last_fp_;
};

}  // namespace smoothcal
