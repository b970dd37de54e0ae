#pragma once

#include "smoothcal/geometry.hpp"
#include "smoothcal/scores.hpp"
#include "smoothcal/weak_calibration.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace smoothcal {

// n-player normal-form game. Payoff tables are flat over pure profiles in
// row-major order (player 0 slowest). Mixed profiles are stacked
// distributions, one simplex block per player.
class FiniteGame {
 public:
  FiniteGame(std::string name, std::vector<int> actions, std::vector<std::vector<double>> payoffs);

  static FiniteGame preset(const std::string& name);
  static std::vector<std::string> preset_names();
  // {"name", "players", "shapes", "payoffs"}; unknown keys are rejected.
  static FiniteGame from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  const std::string& name() const { return name_; }
  int players() const { return static_cast<int>(actions_.size()); }
  int actions(int i) const { return actions_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return actions_; }
  int offset(int i) const { return offsets_[static_cast<std::size_t>(i)]; }
  int total_actions() const { return total_; }
  std::size_t profiles() const { return payoffs_.front().size(); }
  double payoff_bound() const { return bound_; }
  ConvexDomain domain() const;

  double payoff(int i, const std::vector<int>& pure) const;
  // u^i(x) for a stacked mixed profile.
  double expected(int i, const Vector& x) const;
  // u^i(b, x^-i) for every pure action b of player i.
  Vector deviation_payoffs(int i, const Vector& x) const;
  // Player i's payoff alone, as the best-reply construction consumes it.
  OwnPayoff own_payoff(int i) const;

  // Stacked unit vectors of a pure profile.
  Vector embed(const std::vector<int>& pure) const;
  void require_profile(const Vector& x) const;

 private:
  std::size_t flat_index(const std::vector<int>& pure) const;

  std::string name_;
  std::vector<int> actions_;
  std::vector<int> offsets_;
  std::vector<std::vector<double>> payoffs_;
  int total_ = 0;
  double bound_ = 0.0;
};

struct NashCheck {
  bool member = false;
  double worst_gap = 0.0;
  std::vector<double> gaps;  // per player: best pure deviation minus current payoff
};

NashCheck eps_nash_check(const FiniteGame& game, const Vector& x, double eps);

// Constants of the full schedule for a target eps; ne(eps5) holds for all
// but an eps3/eps4 fraction of periods.
struct DynamicSchedule {
  double eps = 0.0;
  int n = 0;
  int m = 0;
  double U = 0.0;
  double nu_m = 0.0;
  double gamma_m = 0.0;
  double eps_g = 0.0;
  double L_g = 0.0;
  double eps4 = 0.0;
  double eps_c = 0.0;
  double L_c = 0.0;
  double eps2 = 0.0;
  double eps1 = 0.0;
  double eps3 = 0.0;
  double eps5 = 0.0;

  nlohmann::json to_json() const;
};

DynamicSchedule tune_dynamic_parameters(double eps, const std::vector<int>& shape, double U);

struct DynamicDeskSettings {
  double eps_g = 0.1;
  double br_net_radius = 0.1;
  double kernel_delta = 0.1;
  double markov_threshold = 0.1;
  DeskSettings forecaster{0, 0.05, 4.0, 0.25, 0.99999, 20000};
};

struct DynamicConfig {
  std::string profile = "desk";
  std::shared_ptr<const ForecasterConfig> forecaster;
  std::vector<SmoothBestReply> best_replies;
  double eps_g = 0.0;
  double br_net_radius = 0.0;
  SmoothingKernel kernel = SmoothingKernel::tent(0.1);
  double markov_threshold = 0.1;
  std::optional<DynamicSchedule> theory;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  std::vector<double> ne_eps{0.05, 0.1, 0.2, 0.3, 0.5};
  std::size_t shared_check_every = 1000;

  nlohmann::json to_json() const;
};

DynamicConfig make_dynamic_config(const FiniteGame& game, const DynamicDeskSettings& s,
                                  std::size_t T, std::uint64_t seed);

struct LearningDiagnostics {
  double k_lambda = 0.0;             // smooth calibration score of (c_t, a_t)
  double ax_gap_quarter = 0.0;       // smoothed action vs behavior gap over the first T/4
  double ax_gap = 0.0;               // same over all T
  double xc_mean = 0.0;              // (1/T) sum ||x_t - c_t||
  double xc_bound = 0.0;             // sum of the four measured triangle terms
  double markov_fraction = 0.0;      // share of t with ||g(c_t) - c_t|| > threshold
  double markov_bound = 0.0;         // mean ||g(c_t) - c_t|| / threshold
  std::size_t shared_checks = 0;
  FixedPointStats fixed_point;

  nlohmann::json to_json() const;
};

struct LearningRun {
  std::vector<Vector> c;
  std::vector<Vector> x;
  std::vector<std::vector<int>> a;
  std::vector<double> nash_gap;  // worst_gap of x_t
  std::vector<double> fp_gap;    // ||g(c_t) - c_t||
  std::vector<std::pair<double, double>> ne_fraction;
  LearningDiagnostics diagnostics;

  double fraction_in_ne(double eps) const;
  // Mean of fp_gap over periods [begin, end).
  double mean_fp_gap(std::size_t begin, std::size_t end) const;
  Vector mean_forecast() const;
};

// One shared forecaster produces c_t; player i plays x_t^i = g^i(c_t) and
// samples a_t^i with the counter generator keyed (seed, t, i).
LearningRun run_smooth_calibrated_learning(const FiniteGame& game, const DynamicConfig& config);

// Game with convex compact (box) action sets and evaluable payoffs.
struct ContinuousGame {
  std::string name;
  std::vector<ConvexDomain> action_sets;
  std::vector<std::function<double(const Vector& profile)>> payoffs;
  double lipschitz = 1.0;

  int players() const { return static_cast<int>(action_sets.size()); }
  ConvexDomain domain() const;
  int offset(int i) const;

  static ContinuousGame quadratic(double target);
  static ContinuousGame team();
  static ContinuousGame zero(int players);
};

struct ContinuousConfig {
  std::shared_ptr<const ForecasterConfig> forecaster;
  std::vector<SmoothBestReply> best_replies;
  double grid_step = 1.0 / 256.0;
  std::size_t T = 0;
  std::size_t burn_in = 0;
  std::vector<double> pne_eps{0.01, 0.05, 0.1};
};

ContinuousConfig make_continuous_config(const ContinuousGame& game, const DynamicDeskSettings& s,
                                        std::size_t T, std::size_t burn_in, double grid_step = 1.0 / 256.0);

// Per-player gap of a pure profile against the grid argmax of the own
// action set.
double pure_nash_gap(const ContinuousGame& game, const Vector& a, double grid_step);

struct ContinuousRun {
  std::vector<Vector> c;
  std::vector<Vector> a;
  std::vector<double> pne_gap;
  std::vector<std::pair<double, double>> pne_fraction;  // over t > burn_in
  std::vector<std::string> warnings;

  double fraction_in_pne(double eps) const;
};

ContinuousRun run_continuous_dynamic(const ContinuousGame& game, const ContinuousConfig& config);

struct ExhaustiveRun {
  bool locked = false;
  std::size_t lock_time = 0;   // period at which every player signalled
  std::size_t lock_index = 0;  // grid index of the locked profile
  Vector profile;              // locked profile
  std::vector<std::vector<int>> actions;
  std::vector<Vector> behavior;
};

// Scans the grid in order; each player signals with action 0 when its own
// block is an eps-best reply and with action 1 otherwise. Throws
// CoverageError when the scan ends without a lock.
ExhaustiveRun run_exhaustive_search(const FiniteGame& game, const std::vector<Vector>& grid,
                                    double eps, std::size_t T, std::uint64_t seed);

}  // namespace smoothcal
