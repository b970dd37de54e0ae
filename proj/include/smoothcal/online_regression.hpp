#pragma once

#include "smoothcal/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace smoothcal {

struct Observation {
  Vector x;
  double y = 0.0;
};

enum class RegressionVariant { forward, discounted, windowed };

std::string to_string(RegressionVariant v);
RegressionVariant regression_variant_from_string(const std::string& s);

struct RegressionParams {
  RegressionVariant variant = RegressionVariant::forward;
  int d = 1;
  double a = 1.0;
  double lambda = 1.0;
  std::size_t R = 0;  // window length, windowed variant only
  double X = std::numeric_limits<double>::infinity();
  double Y = std::numeric_limits<double>::infinity();

  void validate() const;
  nlohmann::json to_json() const;
};

// Forward-family ridge regression. With observations up to t-1 absorbed,
// predict(x_t) returns theta_t = Z_t^{-1} v_t where Z_t already contains
// x_t x_t'. State is kept as S (Gram part) and u (moment part) in "time
// t-1 form"; Z_t = aI + lambda S + x_t x_t' and v_t = lambda u.
class OnlineRegressor {
 public:
  explicit OnlineRegressor(const RegressionParams& p);

  const RegressionParams& params() const { return p_; }
  std::size_t steps() const { return t_; }
  std::size_t window_size() const { return count_; }

  const Vector& predict(const Vector& x);
  void update(const Vector& x, double y);

  Matrix gram(const Vector& x_next) const;
  Vector moment() const;

  // Minimum eigenvalue of the last factorized Z (for the Z >= aI check).
  double last_min_eigenvalue() const;

 private:
  void check_x(const Vector& x) const;
  void recompute();

  RegressionParams p_;
  double discount_;      // lambda for discounted/windowed, 1 for forward
  double evict_weight_;  // lambda^(R-1)
  std::size_t t_ = 0;
  Matrix S_;
  Vector u_;
  Matrix Z_;
  Vector v_;
  Vector theta_;
  Eigen::LLT<Matrix> llt_;

  // Ring buffer of the last R-1 observations (windowed only).
  Matrix ring_x_;
  Vector ring_y_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::size_t since_recompute_ = 0;
};

// Constants of the discounted analysis with ||x|| <= 1, |y| <= 1.
double regret_constant_d1(double a, double lambda, int d);
double regret_constant_d2(double a, double lambda, int d);

// Right-hand side of the windowed regret estimate for a reference of norm
// `theta_norm`.
double windowed_regret_rhs(double a, double lambda, std::size_t R, int d, double theta_norm);

struct TunedParameters {
  double eps = 0.0;       // requested accuracy, original units
  double eps_hat = 0.0;   // eps / max(X^2, Y^2)
  double X = 1.0;
  double Y = 1.0;
  int d = 1;
  double a_rescaled = 1.0;
  double a = 1.0;         // ridge in original units, X^2 * a_rescaled
  int k = 1;              // lambda = 1 - 2^-k
  double one_minus_lambda = 0.5;
  double lambda = 0.5;
  std::size_t R = 1;
  double D1 = 0.0;
  double D2 = 0.0;

  nlohmann::json to_json() const;
};

TunedParameters tune_parameters(double eps, double X, double Y, int d);

// Left-hand sides of the six defining inequalities, each to be <= eps_hat/4.
struct TuningCheck {
  double lambda_floor = 0.0;   // 1/4 - lambda, must be <= 0
  double ridge_term = 0.0;     // a (1 - lambda)
  double d1_discount = 0.0;    // D1 (1 - lambda)
  double ridge_window = 0.0;   // a / R
  double d1_window = 0.0;      // D1 / R
  double recall_term = 0.0;    // 2 / (R (1 - lambda))
  double tail_term = 0.0;      // D2 lambda^R
  double d1_recomputed = 0.0;
  double d2_recomputed = 0.0;
  bool minimal_k = false;      // k - 1 fails one of the lambda conditions
  bool minimal_R = false;      // R - 1 fails one of the window conditions
  bool ok = false;
};

TuningCheck check_tuning(const TunedParameters& p);

// Block expansion turning a discounted problem into a plain forward one.
std::vector<Observation> block_expand(const std::vector<Observation>& data, double a,
                                      double lambda);

// Synthetic observation streams.
enum class DataKind { random_linear, uniform, flip, adaptive_sign, constant };

std::string to_string(DataKind k);
DataKind data_kind_from_string(const std::string& s);

class DataGenerator {
 public:
  DataGenerator(DataKind kind, int d, std::uint64_t seed, double X = 1.0, double Y = 1.0);

  Vector features(std::size_t t) const;
  // `prediction` is the algorithm's yhat_t (used by adaptive_sign only).
  double target(std::size_t t, const Vector& x, double prediction) const;

 private:
  DataKind kind_;
  int d_;
  std::uint64_t seed_;
  double X_;
  double Y_;
  Vector theta_star_;
};

// Windowed and cumulative average regret against a fixed list of
// references, checked against eps(1 + ||theta||^2) at every step: the
// windowed bound from t = 1 on, the cumulative bound from t = R on.
class RegretTracker {
 public:
  RegretTracker(int d, std::size_t R, std::vector<Vector> thetas, double eps);

  void record(const Vector& x, double y, double prediction);

  std::size_t steps() const { return t_; }
  const std::vector<Vector>& thetas() const { return thetas_; }
  double windowed_average(std::size_t i) const;
  double cumulative_average(std::size_t i) const;
  double algorithm_window_loss() const;
  double bound(std::size_t i) const;
  std::size_t violations() const { return violations_; }
  std::size_t checks() const { return checks_; }
  double worst_windowed_margin() const { return worst_window_; }
  double worst_cumulative_margin() const { return worst_cumulative_; }

 private:
  // Sum of psi_t(theta_i) over the steps summarised by `s`.
  double loss_sum(const std::vector<long double>& s, std::size_t i) const;
  void loss_sums(const std::vector<long double>& s, Vector& out) const;

  int d_;
  std::size_t R_;
  std::vector<Vector> thetas_;
  double eps_;
  std::size_t stride_;
  std::vector<double> ring_;
  std::vector<long double> window_;
  std::vector<long double> total_;
  std::vector<double> scratch_;
  Matrix coeff_;  // row i maps summary statistics to the loss of theta_i
  mutable Vector stats_;
  Vector losses_;
  Vector rhs_;
  std::size_t t_ = 0;
  std::size_t violations_ = 0;
  std::size_t checks_ = 0;
  double worst_window_ = -std::numeric_limits<double>::infinity();
  double worst_cumulative_ = -std::numeric_limits<double>::infinity();
};

struct RegretReport {
  std::size_t T = 0;
  std::size_t R = 0;
  double eps = 0.0;
  std::vector<Vector> thetas;
  std::vector<double> windowed_avg;
  std::vector<double> cumulative_avg;
  std::vector<double> bound_rhs;
  std::size_t violations = 0;
  std::size_t checks = 0;
  double worst_windowed_margin = 0.0;
  double worst_cumulative_margin = 0.0;

  nlohmann::json to_json() const;
};

RegretReport make_report(const RegretTracker& tracker, double eps);

RegretReport regret_report(const RegressionParams& params, const std::vector<Observation>& data,
                           const std::vector<Vector>& thetas, double eps);

// {-r..r}^d restricted to ||theta|| <= r, lexicographic.
std::vector<Vector> theta_grid(int d, int r = 2);

}  // namespace smoothcal
