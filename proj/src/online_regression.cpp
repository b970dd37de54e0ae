#include "smoothcal/online_regression.hpp"

#include "smoothcal/rng.hpp"

#include <algorithm>
#include <cmath>

namespace smoothcal {

namespace {

constexpr double kBoundSlack = 1e-12;

using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LongVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

double pow_lambda(double one_minus_lambda, double n) {
  return std::exp(n * std::log1p(-one_minus_lambda));
}

double gaussian(std::uint64_t seed, std::uint64_t t, std::uint64_t stream) {
  double u1 = counter_uniform(seed, t, 2 * stream);
  double u2 = counter_uniform(seed, t, 2 * stream + 1);
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

std::string to_string(RegressionVariant v) {
  switch (v) {
    case RegressionVariant::forward: return "forward";
    case RegressionVariant::discounted: return "discounted";
    case RegressionVariant::windowed: return "windowed";
  }
  return "?";
}

RegressionVariant regression_variant_from_string(const std::string& s) {
  if (s == "forward") return RegressionVariant::forward;
  if (s == "discounted") return RegressionVariant::discounted;
  if (s == "windowed") return RegressionVariant::windowed;
  throw InvalidArgument("unknown regression variant '" + s + "'");
}

void RegressionParams::validate() const {
  require(d >= 1, "regression: d must be positive");
  require(a > 0.0 && std::isfinite(a), "regression: ridge a must be positive");
  if (variant != RegressionVariant::forward) {
    require(lambda > 0.0 && lambda < 1.0, "regression: lambda must lie in (0, 1)");
  }
  if (variant == RegressionVariant::windowed) require(R >= 1, "regression: window R must be >= 1");
  require(X > 0.0 && Y > 0.0, "regression: bounds X, Y must be positive");
}

nlohmann::json RegressionParams::to_json() const {
  nlohmann::json j{{"variant", to_string(variant)}, {"d", d}, {"a", a}};
  if (variant != RegressionVariant::forward) j["lambda"] = lambda;
  if (variant == RegressionVariant::windowed) j["R"] = R;
  if (std::isfinite(X)) j["X"] = X;
  if (std::isfinite(Y)) j["Y"] = Y;
  return j;
}

// ---------------------------------------------------------------------------
// OnlineRegressor

OnlineRegressor::OnlineRegressor(const RegressionParams& p) : p_(p) {
  p_.validate();
  const int d = p_.d;
  discount_ = p_.variant == RegressionVariant::forward ? 1.0 : p_.lambda;
  evict_weight_ = 0.0;
  S_ = Matrix::Zero(d, d);
  u_ = Vector::Zero(d);
  Z_ = Matrix::Zero(d, d);
  v_ = Vector::Zero(d);
  theta_ = Vector::Zero(d);
  llt_ = Eigen::LLT<Matrix>(d);
  if (p_.variant == RegressionVariant::windowed && p_.R > 1) {
    evict_weight_ = std::pow(p_.lambda, static_cast<double>(p_.R - 1));
    ring_x_ = Matrix::Zero(d, static_cast<Eigen::Index>(p_.R - 1));
    ring_y_ = Vector::Zero(static_cast<Eigen::Index>(p_.R - 1));
  }
}

void OnlineRegressor::check_x(const Vector& x) const {
  if (x.size() != p_.d) throw InvalidArgument("regression: feature dimension mismatch");
  if (std::isfinite(p_.X) && x.norm() > p_.X * (1.0 + kBoundSlack)) {
    throw InvalidArgument("regression: ||x|| exceeds the declared bound X");
  }
}

const Vector& OnlineRegressor::predict(const Vector& x) {
  check_x(x);
  Z_.noalias() = discount_ * S_;
  Z_.diagonal().array() += p_.a;
  Z_.noalias() += x * x.transpose();
  llt_.compute(Z_);
  if (llt_.info() != Eigen::Success) throw NumericalFailure("regression: Z is not positive definite");
  v_.noalias() = discount_ * u_;
  theta_ = llt_.solve(v_);
  return theta_;
}

void OnlineRegressor::update(const Vector& x, double y) {
  check_x(x);
  if (!std::isfinite(y) || (std::isfinite(p_.Y) && std::abs(y) > p_.Y * (1.0 + kBoundSlack))) {
    throw InvalidArgument("regression: |y| exceeds the declared bound Y");
  }
  ++t_;
  if (p_.variant != RegressionVariant::windowed) {
    S_ *= discount_;
    S_.noalias() += x * x.transpose();
    u_ *= discount_;
    u_.noalias() += y * x;
    return;
  }
  const std::size_t cap = p_.R - 1;
  if (cap == 0) return;
  S_ *= discount_;
  S_.noalias() += x * x.transpose();
  u_ *= discount_;
  u_.noalias() += y * x;
  std::size_t slot;
  if (count_ == cap) {
    slot = head_;
    auto old = ring_x_.col(static_cast<Eigen::Index>(slot));
    S_.noalias() -= evict_weight_ * (old * old.transpose());
    u_.noalias() -= (evict_weight_ * ring_y_[static_cast<Eigen::Index>(slot)]) * old;
    head_ = (head_ + 1) % cap;
  } else {
    slot = (head_ + count_) % cap;
    ++count_;
  }
  ring_x_.col(static_cast<Eigen::Index>(slot)) = x;
  ring_y_[static_cast<Eigen::Index>(slot)] = y;
  if (++since_recompute_ >= p_.R) recompute();
}

// Rebuilds S and u from the stored window (oldest first, Horner order) in
// extended precision, discarding drift from the incremental downdates.
void OnlineRegressor::recompute() {
  since_recompute_ = 0;
  const int d = p_.d;
  const long double lam = discount_;
  LongMatrix S = LongMatrix::Zero(d, d);
  LongVector u = LongVector::Zero(d);
  const std::size_t cap = p_.R - 1;
  for (std::size_t i = 0; i < count_; ++i) {
    const auto slot = static_cast<Eigen::Index>((head_ + i) % cap);
    LongVector x = ring_x_.col(slot).cast<long double>();
    S = lam * S + x * x.transpose();
    u = lam * u + static_cast<long double>(ring_y_[slot]) * x;
  }
  S_ = S.cast<double>();
  u_ = u.cast<double>();
}

Matrix OnlineRegressor::gram(const Vector& x_next) const {
  check_x(x_next);
  Matrix Z = discount_ * S_;
  Z.diagonal().array() += p_.a;
  Z.noalias() += x_next * x_next.transpose();
  return Z;
}

Vector OnlineRegressor::moment() const { return discount_ * u_; }

double OnlineRegressor::last_min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(Z_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Constants and tuning

double regret_constant_d1(double a, double lambda, int d) {
  require(a > 0.0 && lambda > 0.0 && lambda < 1.0 && d >= 1, "D1: invalid arguments");
  const double dd = d;
  return 4.0 * (std::lgamma(dd + 1.0) + dd * std::log(4.0) +
                dd * std::log1p(1.0 / (a * (1.0 - lambda))));
}

double regret_constant_d2(double a, double lambda, int d) {
  require(a > 0.0 && lambda > 0.0 && lambda < 1.0 && d >= 1, "D2: invalid arguments");
  const double oml = 1.0 - lambda;
  return 2.0 * (a + d) * (a * oml + 1.0) / (a * a * a * oml * oml);
}

double windowed_regret_rhs(double a, double lambda, std::size_t R, int d, double theta_norm) {
  const double Rd = static_cast<double>(R);
  const double oml = 1.0 - lambda;
  return (a * theta_norm * theta_norm + regret_constant_d1(a, lambda, d)) * (oml + lambda / Rd) +
         (theta_norm + 1.0) * (theta_norm + 1.0) / (Rd * oml) +
         regret_constant_d2(a, lambda, d) * std::pow(lambda, Rd);
}

namespace {

struct WindowTerms {
  double ridge, d1, recall, tail;
};

WindowTerms window_terms(double a, double oml, double D1, double D2, double R) {
  return {a / R, D1 / R, 2.0 / (R * oml), D2 * pow_lambda(oml, R)};
}

bool window_ok(const WindowTerms& w, double bound) {
  return w.ridge <= bound && w.d1 <= bound && w.recall <= bound && w.tail <= bound;
}

bool lambda_ok(double a, int k, int d, double bound) {
  const double oml = std::ldexp(1.0, -k);
  const double lambda = 1.0 - oml;
  if (lambda < 0.25) return false;
  return a * oml <= bound && regret_constant_d1(a, lambda, d) * oml <= bound;
}

}  // namespace

nlohmann::json TunedParameters::to_json() const {
  return {{"eps", eps}, {"eps_hat", eps_hat}, {"X", X}, {"Y", Y}, {"d", d},
          {"a_rescaled", a_rescaled}, {"a", a}, {"k", k}, {"lambda", lambda},
          {"one_minus_lambda", one_minus_lambda}, {"R", R}, {"D1", D1}, {"D2", D2}};
}

TunedParameters tune_parameters(double eps, double X, double Y, int d) {
  require(eps > 0.0 && std::isfinite(eps), "tune_parameters: eps must be positive");
  require(X > 0.0 && Y > 0.0, "tune_parameters: X, Y must be positive");
  require(d >= 1, "tune_parameters: d must be positive");
  TunedParameters p;
  p.eps = eps;
  p.X = X;
  p.Y = Y;
  p.d = d;
  p.eps_hat = eps / std::max(X * X, Y * Y);
  require(p.eps_hat <= 1.0, "tune_parameters: eps must be <= 1 after rescaling");
  p.a_rescaled = 1.0;
  p.a = X * X * p.a_rescaled;
  const double bound = p.eps_hat / 4.0;

  int k = 1;
  while (!lambda_ok(p.a_rescaled, k, d, bound)) {
    ++k;
    // Beyond 2^-52 the discount is no longer distinguishable from 1.
    if (k > 52) throw NumericalFailure("tune_parameters: required discount 1 - 2^-k is not representable");
  }
  p.k = k;
  p.one_minus_lambda = std::ldexp(1.0, -k);
  p.lambda = 1.0 - p.one_minus_lambda;
  p.D1 = regret_constant_d1(p.a_rescaled, p.lambda, d);
  p.D2 = regret_constant_d2(p.a_rescaled, p.lambda, d);

  const double oml = p.one_minus_lambda;
  double R = std::max({std::ceil(p.a_rescaled / bound), std::ceil(p.D1 / bound),
                       std::ceil(2.0 / (bound * oml)),
                       std::ceil(std::log(p.D2 / bound) / -std::log1p(-oml)), 1.0});
  while (!window_ok(window_terms(p.a_rescaled, oml, p.D1, p.D2, R), bound)) R += 1.0;
  while (R > 1.0 && window_ok(window_terms(p.a_rescaled, oml, p.D1, p.D2, R - 1.0), bound)) R -= 1.0;
  p.R = static_cast<std::size_t>(R);
  return p;
}

TuningCheck check_tuning(const TunedParameters& p) {
  TuningCheck c;
  const double bound = p.eps_hat / 4.0;
  const double a = p.a_rescaled;
  const double oml = p.one_minus_lambda;
  const double lambda = 1.0 - oml;
  const double R = static_cast<double>(p.R);
  c.d1_recomputed = regret_constant_d1(a, lambda, p.d);
  c.d2_recomputed = regret_constant_d2(a, lambda, p.d);
  c.lambda_floor = 0.25 - lambda;
  c.ridge_term = a * oml;
  c.d1_discount = c.d1_recomputed * oml;
  auto w = window_terms(a, oml, c.d1_recomputed, c.d2_recomputed, R);
  c.ridge_window = w.ridge;
  c.d1_window = w.d1;
  c.recall_term = w.recall;
  c.tail_term = w.tail;
  c.minimal_k = p.k == 1 || !lambda_ok(a, p.k - 1, p.d, bound);
  c.minimal_R = p.R == 1 ||
                !window_ok(window_terms(a, oml, c.d1_recomputed, c.d2_recomputed, R - 1.0), bound);
  c.ok = c.lambda_floor <= 0.0 && c.ridge_term <= bound && c.d1_discount <= bound &&
         c.ridge_window <= bound && c.d1_window <= bound && c.recall_term <= bound &&
         c.tail_term <= bound && c.d1_recomputed == p.D1 && c.d2_recomputed == p.D2 &&
         lambda == p.lambda && std::ldexp(1.0, -p.k) == oml && c.minimal_k && c.minimal_R;
  return c;
}

// ---------------------------------------------------------------------------
// Block expansion

std::vector<Observation> block_expand(const std::vector<Observation>& data, double a,
                                      double lambda) {
  require(a > 0.0, "block_expand: a must be positive");
  require(lambda > 0.0 && lambda < 1.0, "block_expand: lambda must lie in (0, 1)");
  std::vector<Observation> out;
  if (data.empty()) return out;
  const int d = static_cast<int>(data.front().x.size());
  const double b = std::sqrt(a * (1.0 - lambda));
  const double log_lambda = std::log(lambda);
  out.reserve(data.size() * static_cast<std::size_t>(d + 1));
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(data[i].x.size() == d, "block_expand: inconsistent feature dimension");
    const double t = static_cast<double>(i + 1);
    const double exponent = -0.5 * t * log_lambda;
    if (exponent > 600.0) {
      throw InvalidArgument("block_expand: lambda^(-t/2) overflows at t = " + std::to_string(i + 1));
    }
    const double s = std::exp(exponent);
    for (int j = 0; j < d; ++j) {
      Observation o{Vector::Zero(d), 0.0};
      o.x[j] = s * b;
      out.push_back(std::move(o));
    }
    out.push_back({s * data[i].x, s * data[i].y});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data generators

std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::random_linear: return "random_linear";
    case DataKind::uniform: return "uniform";
    case DataKind::flip: return "flip";
    case DataKind::adaptive_sign: return "adaptive_sign";
    case DataKind::constant: return "constant";
  }
  return "?";
}

DataKind data_kind_from_string(const std::string& s) {
  if (s == "random_linear") return DataKind::random_linear;
  if (s == "uniform") return DataKind::uniform;
  if (s == "flip") return DataKind::flip;
  if (s == "adaptive_sign") return DataKind::adaptive_sign;
  if (s == "constant") return DataKind::constant;
  throw InvalidArgument("unknown data generator '" + s + "'");
}

DataGenerator::DataGenerator(DataKind kind, int d, std::uint64_t seed, double X, double Y)
    : kind_(kind), d_(d), seed_(seed), X_(X), Y_(Y) {
  require(d >= 1, "data generator: d must be positive");
  require(X > 0.0 && Y > 0.0, "data generator: bounds must be positive");
  theta_star_ = Vector(d);
  for (int i = 0; i < d; ++i) theta_star_[i] = gaussian(seed, 0, 1000 + i);
  theta_star_ *= (Y / X) / std::max(1.0, theta_star_.norm());
}

Vector DataGenerator::features(std::size_t t) const {
  Vector x = Vector::Zero(d_);
  if (kind_ == DataKind::constant) {
    x[0] = X_;
    return x;
  }
  for (int i = 0; i < d_; ++i) x[i] = gaussian(seed_, t, i);
  double n = x.norm();
  if (n == 0.0) return x;
  double r = std::pow(counter_uniform(seed_, t, 500), 1.0 / d_);
  x *= X_ * r / n;
  return x;
}

double DataGenerator::target(std::size_t t, const Vector& x, double prediction) const {
  switch (kind_) {
    case DataKind::random_linear: {
      double y = theta_star_.dot(x) + 0.25 * Y_ * gaussian(seed_, t, 600);
      return std::clamp(y, -Y_, Y_);
    }
    case DataKind::uniform:
      return Y_ * (2.0 * counter_uniform(seed_, t, 700) - 1.0);
    case DataKind::flip:
      return t % 2 == 1 ? -Y_ : Y_;
    case DataKind::adaptive_sign:
      return prediction > 0.0 ? -Y_ : Y_;
    case DataKind::constant:
      return 0.0;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Regret tracking

RegretTracker::RegretTracker(int d, std::size_t R, std::vector<Vector> thetas, double eps)
    : d_(d), R_(R), thetas_(std::move(thetas)), eps_(eps) {
  require(d >= 1 && R >= 1, "regret tracker: d and R must be positive");
  require(!thetas_.empty(), "regret tracker: no reference vectors");
  // Layout: [algorithm loss, y^2, x*y (d), x x' upper triangle].
  stride_ = 2 + d + d * (d + 1) / 2;
  ring_.assign(R * stride_, 0.0);
  window_.assign(stride_, 0.0L);
  total_.assign(stride_, 0.0L);
  scratch_.assign(stride_, 0.0);
  const auto n = static_cast<Eigen::Index>(thetas_.size());
  coeff_ = Matrix::Zero(n, static_cast<Eigen::Index>(stride_ - 1));
  rhs_ = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector& th = thetas_[i];
    require(th.size() == d, "regret tracker: reference dimension mismatch");
    coeff_(i, 0) = 1.0;
    for (int j = 0; j < d; ++j) coeff_(i, 1 + j) = -2.0 * th[j];
    int c = 1 + d;
    for (int j = 0; j < d; ++j)
      for (int l = j; l < d; ++l) coeff_(i, c++) = (j == l ? 1.0 : 2.0) * th[j] * th[l];
    rhs_[i] = eps * (1.0 + th.squaredNorm());
  }
  stats_ = Vector(static_cast<Eigen::Index>(stride_ - 1));
  losses_ = Vector(n);
}

void RegretTracker::record(const Vector& x, double y, double prediction) {
  const double r = y - prediction;
  scratch_[0] = r * r;
  scratch_[1] = y * y;
  for (int j = 0; j < d_; ++j) scratch_[2 + j] = x[j] * y;
  std::size_t c = 2 + d_;
  for (int j = 0; j < d_; ++j)
    for (int l = j; l < d_; ++l) scratch_[c++] = x[j] * x[l];

  double* slot = &ring_[(t_ % R_) * stride_];
  const bool evict = t_ >= R_;
  for (std::size_t k = 0; k < stride_; ++k) {
    if (evict) window_[k] -= slot[k];
    window_[k] += scratch_[k];
    total_[k] += scratch_[k];
    slot[k] = scratch_[k];
  }
  ++t_;

  const double Rd = static_cast<double>(R_);
  const auto n = static_cast<Eigen::Index>(thetas_.size());
  loss_sums(window_, losses_);
  const double alg_window = static_cast<double>(window_[0]);
  for (Eigen::Index i = 0; i < n; ++i) {
    double margin = (alg_window - losses_[i]) / Rd - rhs_[i];
    worst_window_ = std::max(worst_window_, margin);
    if (margin > kBoundSlack) ++violations_;
  }
  checks_ += static_cast<std::size_t>(n);
  if (t_ >= R_) {
    const double Td = static_cast<double>(t_);
    loss_sums(total_, losses_);
    const double alg_total = static_cast<double>(total_[0]);
    for (Eigen::Index i = 0; i < n; ++i) {
      double margin = (alg_total - losses_[i]) / Td - rhs_[i];
      worst_cumulative_ = std::max(worst_cumulative_, margin);
      if (margin > kBoundSlack) ++violations_;
    }
    checks_ += static_cast<std::size_t>(n);
  }
}

void RegretTracker::loss_sums(const std::vector<long double>& s, Vector& out) const {
  for (std::size_t k = 1; k < stride_; ++k) stats_[static_cast<Eigen::Index>(k - 1)] = static_cast<double>(s[k]);
  out.noalias() = coeff_ * stats_;
}

double RegretTracker::loss_sum(const std::vector<long double>& s, std::size_t i) const {
  long double acc = 0.0L;
  for (std::size_t k = 1; k < stride_; ++k) {
    acc += static_cast<long double>(coeff_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k - 1))) * s[k];
  }
  return static_cast<double>(acc);
}

double RegretTracker::windowed_average(std::size_t i) const {
  return (static_cast<double>(window_[0]) - loss_sum(window_, i)) / static_cast<double>(R_);
}

double RegretTracker::cumulative_average(std::size_t i) const {
  if (t_ == 0) return 0.0;
  return (static_cast<double>(total_[0]) - loss_sum(total_, i)) / static_cast<double>(t_);
}

double RegretTracker::algorithm_window_loss() const { return static_cast<double>(window_[0]); }

double RegretTracker::bound(std::size_t i) const { return rhs_[static_cast<Eigen::Index>(i)]; }

nlohmann::json RegretReport::to_json() const {
  nlohmann::json refs = nlohmann::json::array();
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    refs.push_back({{"theta", std::vector<double>(thetas[i].data(), thetas[i].data() + thetas[i].size())},
                    {"windowed_avg", windowed_avg[i]},
                    {"cumulative_avg", cumulative_avg[i]},
                    {"bound", bound_rhs[i]}});
  }
  return {{"T", T},
          {"R", R},
          {"eps", eps},
          {"violations", violations},
          {"checks", checks},
          {"worst_windowed_margin", worst_windowed_margin},
          {"worst_cumulative_margin", worst_cumulative_margin},
          {"references", refs}};
}

RegretReport make_report(const RegretTracker& tracker, double eps) {
  RegretReport r;
  r.T = tracker.steps();
  r.eps = eps;
  r.thetas = tracker.thetas();
  for (std::size_t i = 0; i < r.thetas.size(); ++i) {
    r.windowed_avg.push_back(tracker.windowed_average(i));
    r.cumulative_avg.push_back(tracker.cumulative_average(i));
    r.bound_rhs.push_back(tracker.bound(i));
  }
  r.violations = tracker.violations();
  r.checks = tracker.checks();
  r.worst_windowed_margin = tracker.worst_windowed_margin();
  r.worst_cumulative_margin = tracker.worst_cumulative_margin();
  return r;
}

RegretReport regret_report(const RegressionParams& params, const std::vector<Observation>& data,
                           const std::vector<Vector>& thetas, double eps) {
  require(!data.empty(), "regret_report: T must be at least 1");
  std::size_t R = params.variant == RegressionVariant::windowed ? params.R : data.size();
  OnlineRegressor reg(params);
  RegretTracker tracker(params.d, R, thetas, eps);
  for (const auto& o : data) {
    const Vector& th = reg.predict(o.x);
    tracker.record(o.x, o.y, th.dot(o.x));
    reg.update(o.x, o.y);
  }
  RegretReport r = make_report(tracker, eps);
  r.R = R;
  return r;
}

std::vector<Vector> theta_grid(int d, int r) {
  require(d >= 1 && r >= 0, "theta_grid: invalid arguments");
  std::vector<Vector> out;
  std::vector<int> k(d, -r);
  Vector th(d);
  while (true) {
    long sq = 0;
    for (int i = 0; i < d; ++i) sq += static_cast<long>(k[i]) * k[i];
    if (sq <= static_cast<long>(r) * r) {
      for (int i = 0; i < d; ++i) th[i] = k[i];
      out.push_back(th);
    }
    int i = d - 1;
    while (i >= 0 && k[i] == r) k[i--] = -r;
    if (i < 0) break;
    ++k[i];
  }
  return out;
}

}  // namespace smoothcal
