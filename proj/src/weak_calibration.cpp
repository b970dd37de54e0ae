#include "smoothcal/weak_calibration.hpp"

#include "smoothcal/online_regression.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace smoothcal {

namespace {

struct Derived {
  double eps1, eps2, eps3, eps4, K;
};

Derived derive(double eps, double L, int m, int d, double lambda) {
  const double md = m, dd = d;
  Derived x;
  x.eps1 = eps / (2.0 * std::sqrt(md));
  x.eps2 = eps / (md + md * (1.0 + dd) * (1.0 + dd) + dd * dd);
  x.eps3 = x.eps2 * x.eps2;
  x.eps4 = eps / (L * std::sqrt(md) + 1.0);
  x.K = dd * lambda / (1.0 - lambda);
  return x;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json vec_json(const Vector& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vector json_vec(const nlohmann::json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

bool ForecasterConfig::consistent() const {
  if (!basis || basis->dim() != d || basis->coords() != m) return false;
  Derived x = derive(eps, L, m, d, lambda);
  return x.eps1 == eps1 && x.eps2 == eps2 && x.eps3 == eps3 && x.eps4 == eps4 && x.K == K;
}

nlohmann::json ForecasterConfig::to_json() const {
  return {{"profile", profile},
          {"eps", eps},
          {"L", L},
          {"m", m},
          {"d", d},
          {"eps1", eps1},
          {"eps2", eps2},
          {"eps3", eps3},
          {"eps4", eps4},
          {"lambda", lambda},
          {"R", R},
          {"K", K},
          {"ridge", 1.0},
          {"basis", basis->to_json()},
          {"fixed_point",
           {{"tol", fixed_point.tol},
            {"coarse_tol", fixed_point.coarse_tol},
            {"eta", fixed_point.eta},
            {"max_iterations", fixed_point.max_iterations},
            {"stagnation_window", fixed_point.stagnation_window},
            {"starts", "origin, then box corners in lexicographic order"},
            {"tie_break", "first start reaching tol; otherwise smallest residual"}}}};
}

std::string ForecasterConfig::hash() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

ForecasterConfig make_forecaster_config(std::shared_ptr<const BasisFamily> basis, double eps,
                                        double L, double lambda, std::size_t R,
                                        std::string profile) {
  require(basis != nullptr, "forecaster config: missing basis");
  require(basis->domain().inside_unit_cube(), "forecaster config: C must lie in [0,1]^m");
  require(eps > 0.0 && eps <= 1.0, "forecaster config: eps must lie in (0, 1]");
  require(L >= 1.0, "forecaster config: L must be at least 1");
  require(lambda > 0.0 && lambda < 1.0, "forecaster config: lambda must lie in (0, 1)");
  require(R >= 1, "forecaster config: R must be positive");
  ForecasterConfig c;
  c.profile = std::move(profile);
  c.basis = std::move(basis);
  c.eps = eps;
  c.L = L;
  c.m = c.basis->coords();
  c.d = c.basis->dim();
  c.lambda = lambda;
  c.R = R;
  Derived x = derive(eps, L, c.m, c.d, lambda);
  c.eps1 = x.eps1;
  c.eps2 = x.eps2;
  c.eps3 = x.eps3;
  c.eps4 = x.eps4;
  c.K = x.K;
  return c;
}

ForecasterConfig desk_config(const ConvexDomain& domain, const DeskSettings& s) {
  auto basis = std::make_shared<const BasisFamily>(partition_basis(domain, s.net_radius, s.L));
  return make_forecaster_config(std::move(basis), s.eps, s.L, s.lambda, s.R, "desk");
}

ForecasterConfig desk_config(const DeskSettings& s) {
  return desk_config(ConvexDomain::unit_box(s.m), s);
}

nlohmann::json TheoryConstants::to_json() const {
  nlohmann::json j = {{"eps", eps},   {"L", L},         {"m", m},       {"d", basis_dim},
                      {"eps1", eps1}, {"eps2", eps2},   {"eps3", eps3}, {"eps4", eps4},
                      {"k", nullptr}, {"R", nullptr},   {"K", nullptr}, {"note", note}};
  if (k) j["k"] = *k;
  if (R) j["R"] = *R;
  if (K) j["K"] = *K;
  return j;
}

TheoryConstants theory_constants(const ConvexDomain& domain, double eps, double L) {
  require(eps > 0.0 && eps <= 1.0, "theory constants: eps must lie in (0, 1]");
  require(L >= 1.0, "theory constants: L must be at least 1");
  TheoryConstants t;
  t.eps = eps;
  t.L = L;
  t.m = domain.dim();
  t.eps1 = eps / (2.0 * std::sqrt(static_cast<double>(t.m)));
  BasisFamily basis = lipschitz_basis(domain, L, t.eps1, std::numeric_limits<std::size_t>::max());
  t.basis_dim = static_cast<std::size_t>(basis.dim());
  Derived x = derive(eps, L, t.m, basis.dim(), 0.5);
  t.eps2 = x.eps2;
  t.eps3 = x.eps3;
  t.eps4 = x.eps4;
  try {
    TunedParameters p = tune_parameters(t.eps3, std::sqrt(static_cast<double>(basis.dim())), 1.0,
                                        basis.dim());
    t.k = p.k;
    t.R = p.R;
    t.K = basis.dim() * p.lambda / p.one_minus_lambda;
  } catch (const NumericalFailure& e) {
    t.note = e.what();
  }
  return t;
}

nlohmann::json FixedPointStats::to_json() const {
  return {{"periods", periods},
          {"fine", fine},
          {"coarse", coarse},
          {"fallbacks", fallbacks},
          {"worst_residual", worst_residual}};
}

WeakCalibratedForecaster::WeakCalibratedForecaster(std::shared_ptr<const ForecasterConfig> config)
    : cfg_(std::move(config)) {
  require(cfg_ != nullptr && cfg_->basis != nullptr, "forecaster: missing configuration");
}

void WeakCalibratedForecaster::prepare() const {
  if (prepared_) return;
  const int d = cfg_->d, m = cfg_->m;
  // Sum weights and weighted actions per distinct forecast, newest first,
  // then add each group's outer product once.
  ++epoch_;
  order_.clear();
  double w = cfg_->lambda;
  for (auto it = window_.rbegin(); it != window_.rend(); ++it) {
    Group& g = groups_[static_cast<std::size_t>(it->group)];
    if (g.epoch != epoch_) {
      g.epoch = epoch_;
      g.weight = 0.0;
      g.a_sum = Vector::Zero(m);
      order_.push_back(it->group);
    }
    g.weight += w;
    g.a_sum += w * it->a;
    w *= cfg_->lambda;
  }
  Matrix Z = Matrix::Identity(d, d);
  Matrix V = Matrix::Zero(d, m);
  for (int id : order_) {
    const Group& g = groups_[static_cast<std::size_t>(id)];
    for (const auto& xi : g.x) {
      const double wx = g.weight * xi.value;
      for (const auto& xk : g.x) Z(xi.index, xk.index) += wx * xk.value;
      V.row(xi.index) += xi.value * g.a_sum.transpose();
    }
  }
  Eigen::LLT<Matrix> llt(Z);
  if (llt.info() != Eigen::Success) throw NumericalFailure("forecaster: window Gram not positive definite");
  M_ = llt.solve(Matrix::Identity(d, d));
  W_ = llt.solve(V);
  prepared_ = true;
}

Vector WeakCalibratedForecaster::eval_H(const Vector& c) const {
  require(c.size() == cfg_->m, "eval_H: dimension mismatch");
  require(c.allFinite(), "eval_H: non-finite point");
  prepare();
  cfg_->basis->sparse_features(cfg_->domain().project(c), scratch_);
  double s = 0.0;
  for (const auto& xi : scratch_) {
    for (const auto& xk : scratch_) s += xi.value * M_(xi.index, xk.index) * xk.value;
  }
  Vector h = Vector::Zero(cfg_->m);
  for (const auto& xi : scratch_) h += xi.value * W_.row(xi.index).transpose();
  return h / (1.0 + s);
}

Vector WeakCalibratedForecaster::eval_H_direct(const Vector& c) const {
  require(c.size() == cfg_->m, "eval_H: dimension mismatch");
  const int d = cfg_->d, m = cfg_->m;
  Vector F = cfg_->basis->features(cfg_->domain().project(c));
  Matrix Z = Matrix::Identity(d, d) + F * F.transpose();
  Matrix V = Matrix::Zero(d, m);
  double w = cfg_->lambda;
  for (auto it = window_.rbegin(); it != window_.rend(); ++it) {
    Vector x = cfg_->basis->features(it->c);
    Z += w * x * x.transpose();
    V += w * x * it->a.transpose();
    w *= cfg_->lambda;
  }
  Eigen::LLT<Matrix> llt(Z);
  Vector h(m);
  for (int j = 0; j < m; ++j) h[j] = llt.solve(V.col(j)).dot(F);
  return h;
}

double WeakCalibratedForecaster::residual(const Vector& b, Vector& h) const {
  h = eval_H(b);
  return (h - b).norm();
}

FixedPointResult WeakCalibratedForecaster::damped(const Vector& start, int label) const {
  const auto& o = cfg_->fixed_point;
  FixedPointResult best{start, std::numeric_limits<double>::infinity(), label, 0, false};
  Vector b = start, h;
  double anchor = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= o.max_iterations; ++it) {
    double r = residual(b, h);
    if (r < best.residual) best = {b, r, label, it, false};
    if (r <= o.tol) return best;
    if (it > 0 && it % o.stagnation_window == 0) {
      if (best.residual > 0.5 * anchor) break;
      anchor = best.residual;
    }
    b = (1.0 - o.eta) * b + o.eta * h;
  }
  return best;
}

FixedPointResult WeakCalibratedForecaster::search() const {
  const ConvexDomain& C = cfg_->domain();
  const int m = cfg_->m;
  Vector h;
  auto candidate = [&](const Vector& c) {
    Vector b = eval_H(c);
    double r = residual(b, h);
    return FixedPointResult{b, r, -1, 0, false};
  };

  if (m == 1) {
    // Fixed points of c -> project(H(c)) on an interval; the endpoints
    // bracket a sign change of project(H(c)) - c.
    const double lo = C.bounding_lower()[0], hi = C.bounding_upper()[0];
    Vector c(1);
    auto g = [&](double x) {
      c[0] = x;
      return std::clamp(eval_H(c)[0], lo, hi) - x;
    };
    const int n = 256;
    double a = lo, ga = g(lo);
    double b = hi;
    for (int i = 1; i <= n; ++i) {
      double x = lo + (hi - lo) * i / n;
      double gx = g(x);
      if (ga >= 0.0 && gx <= 0.0) {
        b = x;
        break;
      }
      a = x;
      ga = gx;
    }
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      (g(mid) >= 0.0 ? a : b) = mid;
    }
    c[0] = a;
    FixedPointResult left = candidate(c);
    c[0] = b;
    FixedPointResult right = candidate(c);
    return right.residual < left.residual ? right : left;
  }

  // Coarse scan of C for the smallest |project(H(c)) - c|, then Newton
  // steps on H(b) - b with a forward-difference Jacobian.
  double step = 0.05;
  while (C.grid_size(step) > 4096) step *= 1.25;
  Vector best_c;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const Vector& c : C.grid(step)) {
    double gap = (C.project(eval_H(c)) - c).norm();
    if (gap < best_gap) {
      best_gap = gap;
      best_c = c;
    }
  }
  FixedPointResult best = candidate(best_c);
  Vector b = best.b;
  Vector G;
  double r = residual(b, G);
  G -= b;
  for (int it = 0; it < 100 && r > cfg_->fixed_point.tol; ++it) {
    Matrix J(m, m);
    const double fd = 1e-7;
    for (int i = 0; i < m; ++i) {
      Vector e = b;
      e[i] += fd;
      J.col(i) = (eval_H(e) - e - G) / fd;
    }
    Vector delta = J.colPivHouseholderQr().solve(-G);
    if (!delta.allFinite()) break;
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      Vector trial = b + t * delta;
      Vector Ht;
      double rt = residual(trial, Ht);
      if (rt < r) {
        b = trial;
        r = rt;
        G = Ht - trial;
        moved = true;
        break;
      }
    }
    if (!moved) break;
    if (r < best.residual) best = {b, r, -1, it + 1, false};
  }
  if (best.residual > cfg_->fixed_point.tol) {
    FixedPointResult polish = damped(best.b, -1);
    if (polish.residual < best.residual) best = polish;
  }
  return best;
}

FixedPointResult WeakCalibratedForecaster::solve_fixed_point() const {
  const int m = cfg_->m;
  const auto& o = cfg_->fixed_point;
  FixedPointResult best = damped(Vector::Zero(m), 0);
  if (best.residual <= o.tol) return best;
  for (int idx = 0; idx < (1 << m); ++idx) {
    Vector corner(m);
    for (int i = 0; i < m; ++i) corner[i] = ((idx >> (m - 1 - i)) & 1) ? cfg_->K : -cfg_->K;
    FixedPointResult r = damped(corner, idx + 1);
    if (r.residual <= o.tol) return r;
    if (r.residual < best.residual) best = r;
  }
  FixedPointResult fb = search();
  if (fb.residual <= o.tol) return fb;
  if (fb.residual < best.residual) best = fb;
  if (best.residual <= o.coarse_tol) {
    best.coarse = true;
    return best;
  }
  char msg[160];
  std::snprintf(msg, sizeof msg, "fixed point: best residual %.3g exceeds the coarse tolerance %.3g",
                best.residual, o.coarse_tol);
  throw NumericalFailure(msg);
}

const Vector& WeakCalibratedForecaster::next_forecast() {
  if (forecast_) return *forecast_;
  last_fp_ = solve_fixed_point();
  ++stats_.periods;
  if (last_fp_.coarse) {
    ++stats_.coarse;
  } else {
    ++stats_.fine;
  }
  if (last_fp_.start < 0) ++stats_.fallbacks;
  stats_.worst_residual = std::max(stats_.worst_residual, last_fp_.residual);
  const ConvexDomain& C = cfg_->domain();
  forecast_ = C.snap(C.project(last_fp_.b), cfg_->eps4);
  return *forecast_;
}

void WeakCalibratedForecaster::observe(const Vector& c, const Vector& a) {
  const ConvexDomain& C = cfg_->domain();
  require(c.size() == cfg_->m && a.size() == cfg_->m, "observe: dimension mismatch");
  require(C.contains(c, 1e-12), "observe: forecast outside C");
  require(C.contains(a, 1e-12), "observe: action outside C");
  std::string key(reinterpret_cast<const char*>(c.data()), sizeof(double) * static_cast<std::size_t>(c.size()));
  auto found = group_of_.find(key);
  int id;
  if (found != group_of_.end()) {
    id = found->second;
  } else {
    if (free_groups_.empty()) {
      id = static_cast<int>(groups_.size());
      groups_.emplace_back();
    } else {
      id = free_groups_.back();
      free_groups_.pop_back();
    }
    cfg_->basis->sparse_features(c, groups_[static_cast<std::size_t>(id)].x);
    group_of_.emplace(std::move(key), id);
  }
  ++groups_[static_cast<std::size_t>(id)].refs;
  window_.push_back(WindowEntry{c, a, id});
  while (window_.size() + 1 > cfg_->R) {
    const WindowEntry& old = window_.front();
    Group& g = groups_[static_cast<std::size_t>(old.group)];
    if (--g.refs == 0) {
      group_of_.erase(std::string(reinterpret_cast<const char*>(old.c.data()),
                                  sizeof(double) * static_cast<std::size_t>(old.c.size())));
      free_groups_.push_back(old.group);
    }
    window_.pop_front();
  }
  ++periods_;
  prepared_ = false;
  forecast_.reset();
}

nlohmann::json WeakCalibratedForecaster::state_json() const {
  nlohmann::json win = nlohmann::json::array();
  for (const auto& e : window_) win.push_back({{"c", vec_json(e.c)}, {"a", vec_json(e.a)}});
  return {{"config_hash", cfg_->hash()}, {"periods", periods_}, {"window", win}};
}

WeakCalibratedForecaster WeakCalibratedForecaster::from_state(
    std::shared_ptr<const ForecasterConfig> config, const nlohmann::json& state) {
  WeakCalibratedForecaster f(std::move(config));
  require(state.at("config_hash").get<std::string>() == f.cfg_->hash(),
          "forecaster state: configuration hash mismatch");
  for (const auto& e : state.at("window")) f.observe(json_vec(e.at("c")), json_vec(e.at("a")));
  f.periods_ = state.at("periods").get<std::size_t>();
  return f;
}

}  // namespace smoothcal
