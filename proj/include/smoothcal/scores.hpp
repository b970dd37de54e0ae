#pragma once

#include "smoothcal/geometry.hpp"
#include "smoothcal/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace smoothcal {

// The realized history (c_1, a_1), ..., (c_T, a_T) of a calibration game.
class Transcript {
 public:
  explicit Transcript(ConvexDomain domain);

  const ConvexDomain& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  std::size_t size() const { return c_.size(); }
  bool empty() const { return c_.empty(); }

  // Both points must lie in the domain within 1e-12.
  void append(const Vector& c, const Vector& a);
  void reserve(std::size_t n);

  const Vector& forecast(std::size_t t) const { return c_[t]; }
  const Vector& action(std::size_t t) const { return a_[t]; }
  const std::vector<Vector>& forecasts() const { return c_; }
  const std::vector<Vector>& actions() const { return a_; }

  // Columns t, c_1..c_m, a_1..a_m; t starts at 1.
  void write_csv(std::ostream& os) const;
  static Transcript read_csv(std::istream& is, const ConvexDomain& domain);

  friend bool operator==(const Transcript& x, const Transcript& y);

 private:
  ConvexDomain domain_;
  std::vector<Vector> c_;
  std::vector<Vector> a_;
};

class SmoothingKernel {
 public:
  enum class Kind { indicator, tent, gaussian };

  static SmoothingKernel indicator();
  static SmoothingKernel tent(double delta);
  static SmoothingKernel gaussian(double sigma);

  Kind kind() const { return kind_; }
  double width() const { return width_; }
  // Lipschitz bound in the first argument; infinite for the indicator.
  double lipschitz() const;
  // Radius outside which the kernel vanishes (infinite for the Gaussian).
  double support_radius() const;

  double operator()(const Vector& c_prime, const Vector& c) const;

  std::string name() const;
  nlohmann::json to_json() const;
  static SmoothingKernel from_json(const nlohmann::json& j);

 private:
  SmoothingKernel(Kind kind, double width) : kind_(kind), width_(width) {}
  Kind kind_;
  double width_;
};

std::string to_string(SmoothingKernel::Kind k);

// Kernel-weighted sums over a point sequence. Points are grouped by bitwise
// equality; for group g, weight[g] = sum_s Lambda(c_s, c_g) and column g of
// sums is sum_s Lambda(c_s, c_g) b_s.
struct KernelSums {
  std::vector<std::size_t> group_of;  // per period
  std::vector<Vector> centers;        // distinct points, first-appearance order
  std::vector<double> count;          // periods per group
  std::vector<double> weight;
  Matrix sums;  // rows = value dimension, columns = groups
};

KernelSums kernel_sums(const std::vector<Vector>& points, const std::vector<Vector>& values,
                       const SmoothingKernel& kernel);

enum class SmoothingVariant { both_smoothed, action_only };

struct SmoothedScores {
  double K = 0.0;        // both sides smoothed
  double K_tilde = 0.0;  // action average smoothed, raw forecast
};

// Exact-match calibration score.
double calibration_score(const Transcript& t);

double smoothed_score(const Transcript& t, const SmoothingKernel& kernel,
                      SmoothingVariant variant = SmoothingVariant::both_smoothed);
SmoothedScores smoothed_scores(const Transcript& t, const SmoothingKernel& kernel);

// Per-period smoothed action average and smoothed forecast.
struct SmoothedPath {
  std::vector<Vector> a_bar;
  std::vector<Vector> c_bar;
};
SmoothedPath smoothed_path(const Transcript& t, const SmoothingKernel& kernel);

double weak_score(const Transcript& t, const WeightFunction& w);

struct IndicatorBound {
  double sup_S = 0.0;  // largest S_T^w over the 2m split indicators
  double K = 0.0;
};
IndicatorBound indicator_sup_bound(const Transcript& t);

// Closed-form constant 2^((m+3)/2) alpha^(m/2) m^(m/4) times a safety factor 2.
double averaging_constant(int m, double alpha);

struct AveragingBound {
  double lhs = 0.0;    // (1/T) sum_t ||B_t|| / W_t
  double kappa = 0.0;  // (1/T) max_t ||B_t||
  double gamma = 0.0;
  double rhs = 0.0;    // gamma L^(m/2) sqrt(kappa)
  bool holds() const { return lhs <= rhs; }
};
AveragingBound averaging_bound(const std::vector<Vector>& forecasts,
                               const std::vector<Vector>& residuals,
                               const SmoothingKernel& kernel, double alpha);

enum class ConversionDirection { weak_to_smooth, smooth_to_weak };

struct ConversionConstants {
  double eps_prime = 0.0;
  double L_prime = 0.0;
  double eps1 = 0.0;  // intermediate accuracy, smooth_to_weak only
};

// weak_to_smooth uses `gamma`; smooth_to_weak ignores it.
ConversionConstants conversion_constants(ConversionDirection dir, double eps, double L, int m,
                                         double gamma = 0.0);

// Named weight functions reported by the score subcommand: the constant
// one, each coordinate of the unit cube, and a tent bump at the centre.
std::vector<WeightFunction> weight_presets(const ConvexDomain& domain);

}  // namespace smoothcal
