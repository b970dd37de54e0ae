#include "smoothcal/calibration_game.hpp"

#include "smoothcal/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace smoothcal {

namespace {

nlohmann::json vec_json(const Vector& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

bool same_bits(const Vector& x, const Vector& y) {
  return x.size() == y.size() &&
         std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
}

void vertices_into(const ConvexDomain& d, std::vector<Vector>& out) {
  switch (d.kind()) {
    case ConvexDomain::Kind::box: {
      const int m = d.dim();
      for (int idx = 0; idx < (1 << m); ++idx) {
        Vector v(m);
        for (int i = 0; i < m; ++i) {
          v[i] = ((idx >> (m - 1 - i)) & 1) ? d.upper()[i] : d.lower()[i];
        }
        out.push_back(v);
      }
      break;
    }
    case ConvexDomain::Kind::simplex:
      for (int i = 0; i < d.dim(); ++i) out.push_back(Vector::Unit(d.dim(), i));
      break;
    case ConvexDomain::Kind::product: {
      std::vector<Vector> acc{Vector(0)};
      for (const auto& f : d.factors()) {
        std::vector<Vector> fv, next;
        vertices_into(f, fv);
        for (const auto& head : acc) {
          for (const auto& tail : fv) {
            Vector v(head.size() + tail.size());
            v << head, tail;
            next.push_back(v);
          }
        }
        acc = std::move(next);
      }
      out.insert(out.end(), acc.begin(), acc.end());
      break;
    }
  }
}

}  // namespace

std::vector<Vector> domain_vertices(const ConvexDomain& domain) {
  std::vector<Vector> out;
  vertices_into(domain, out);
  return out;
}

WeakCalibratedPlayer::WeakCalibratedPlayer(std::shared_ptr<const ForecasterConfig> config)
    : engine_(std::move(config)) {}

std::unique_ptr<Forecaster> WeakCalibratedPlayer::clone() const {
  return std::make_unique<WeakCalibratedPlayer>(*this);
}

nlohmann::json WeakCalibratedPlayer::describe() const {
  return {{"kind", name()}, {"config", engine_.config().to_json()},
          {"config_hash", engine_.config().hash()}};
}

AlternatingForecaster::AlternatingForecaster(ConvexDomain domain, std::vector<Vector> cycle)
    : domain_(std::move(domain)), cycle_(std::move(cycle)) {
  require(!cycle_.empty(), "alternating forecaster: empty cycle");
  for (const auto& c : cycle_) {
    require(domain_.contains(c, 1e-12), "alternating forecaster: forecast outside C");
  }
}

std::unique_ptr<Forecaster> AlternatingForecaster::clone() const {
  return std::make_unique<AlternatingForecaster>(*this);
}

nlohmann::json AlternatingForecaster::describe() const {
  nlohmann::json cyc = nlohmann::json::array();
  for (const auto& c : cycle_) cyc.push_back(vec_json(c));
  return {{"kind", name()}, {"cycle", cyc}};
}

ConstantForecaster::ConstantForecaster(ConvexDomain domain, Vector c)
    : domain_(std::move(domain)), c_(std::move(c)) {
  require(domain_.contains(c_, 1e-12), "constant forecaster: forecast outside C");
}

std::unique_ptr<Forecaster> ConstantForecaster::clone() const {
  return std::make_unique<ConstantForecaster>(*this);
}

nlohmann::json ConstantForecaster::describe() const {
  return {{"kind", name()}, {"c", vec_json(c_)}};
}

std::string to_string(GameMode m) { return m == GameMode::leaky ? "leaky" : "standard"; }

std::string to_string(Adversary::Kind k) {
  switch (k) {
    case Adversary::Kind::threshold:
      return "threshold";
    case Adversary::Kind::constant:
      return "constant";
    case Adversary::Kind::seeded_random:
      return "seeded_random";
    case Adversary::Kind::reaction:
      return "reaction";
    case Adversary::Kind::simulating_best_response:
      return "simulating_best_response";
  }
  return "?";
}

Adversary Adversary::threshold(double cut, GameMode mode) {
  Adversary a(Kind::threshold, mode);
  a.param_ = cut;
  return a;
}

Adversary Adversary::constant(Vector point) {
  Adversary a(Kind::constant, GameMode::standard);
  a.point_ = std::move(point);
  return a;
}

Adversary Adversary::seeded_random(double p) {
  require(p >= 0.0 && p <= 1.0, "seeded_random adversary: p must lie in [0, 1]");
  Adversary a(Kind::seeded_random, GameMode::standard);
  a.param_ = p;
  return a;
}

Adversary Adversary::reaction(std::string name, std::function<Vector(const Vector&)> g,
                              GameMode mode) {
  require(static_cast<bool>(g), "reaction adversary: missing reaction function");
  Adversary a(Kind::reaction, mode);
  a.label_ = std::move(name);
  a.g_ = std::move(g);
  return a;
}

Adversary Adversary::simulating_best_response(std::vector<WeightFunction> targets, GameMode mode) {
  require(!targets.empty(), "simulating adversary: no target weights");
  Adversary a(Kind::simulating_best_response, mode);
  a.targets_ = std::move(targets);
  return a;
}

Adversary::Adversary(const Adversary& o)
    : kind_(o.kind_),
      mode_(o.mode_),
      param_(o.param_),
      point_(o.point_),
      label_(o.label_),
      g_(o.g_),
      targets_(o.targets_),
      seed_(o.seed_),
      domain_(o.domain_),
      vertices_(o.vertices_),
      replica_(o.replica_ ? o.replica_->clone() : nullptr),
      running_(o.running_),
      predicted_(o.predicted_),
      has_prediction_(o.has_prediction_),
      mismatches_(o.mismatches_) {}

Adversary& Adversary::operator=(const Adversary& o) {
  if (this != &o) *this = Adversary(o);
  return *this;
}

bool Adversary::reactive() const {
  return kind_ == Kind::threshold || kind_ == Kind::reaction ||
         kind_ == Kind::simulating_best_response;
}

std::string Adversary::name() const {
  std::string base = to_string(kind_);
  if (kind_ == Kind::reaction && !label_.empty()) base += "(" + label_ + ")";
  return base;
}

nlohmann::json Adversary::describe() const {
  nlohmann::json j = {{"kind", to_string(kind_)}, {"mode", to_string(mode_)}};
  switch (kind_) {
    case Kind::threshold:
      j["cut"] = param_;
      break;
    case Kind::constant:
      j["a"] = vec_json(point_);
      break;
    case Kind::seeded_random:
      j["p"] = param_;
      break;
    case Kind::reaction:
      j["g"] = label_;
      break;
    case Kind::simulating_best_response: {
      nlohmann::json names = nlohmann::json::array();
      for (const auto& w : targets_) names.push_back(w.name);
      j["targets"] = names;
      break;
    }
  }
  return j;
}

void Adversary::reset(const Forecaster& forecaster, std::uint64_t seed) {
  seed_ = seed;
  domain_ = std::make_shared<const ConvexDomain>(forecaster.domain());
  vertices_ = domain_vertices(*domain_);
  running_.assign(targets_.size(), Vector::Zero(domain_->dim()));
  replica_.reset();
  has_prediction_ = false;
  mismatches_ = 0;
  if (kind_ == Kind::threshold) {
    require(domain_->kind() == ConvexDomain::Kind::box, "threshold adversary: C must be a box");
  }
  if (kind_ == Kind::constant) {
    require(domain_->contains(point_, 1e-12), "constant adversary: action outside C");
  }
  if (reactive() && mode_ == GameMode::standard) replica_ = forecaster.clone();
}

Vector Adversary::respond(std::size_t t, const Vector& c) {
  (void)t;
  switch (kind_) {
    case Kind::threshold: {
      Vector a(c.size());
      for (Eigen::Index i = 0; i < c.size(); ++i) {
        a[i] = c[i] < param_ ? domain_->upper()[i] : domain_->lower()[i];
      }
      return a;
    }
    case Kind::reaction:
      return g_(c);
    case Kind::simulating_best_response: {
      std::size_t best = 0;
      double best_score = -1.0;
      for (std::size_t v = 0; v < vertices_.size(); ++v) {
        double score = 0.0;
        for (std::size_t k = 0; k < targets_.size(); ++k) {
          score = std::max(score, (running_[k] + targets_[k](c) * (vertices_[v] - c)).norm());
        }
        if (score > best_score) {
          best_score = score;
          best = v;
        }
      }
      return vertices_[best];
    }
    default:
      break;
  }
  throw InvalidArgument("adversary: not a reactive kind");
}

Vector Adversary::act(std::size_t t, const Vector* leaked) {
  require(domain_ != nullptr, "adversary: reset() not called");
  Vector a;
  if (reactive()) {
    if (mode_ == GameMode::leaky) {
      require(leaked != nullptr, "adversary: leaky mode needs the current forecast");
      a = respond(t, *leaked);
    } else {
      predicted_ = replica_->next_forecast();
      has_prediction_ = true;
      a = respond(t, predicted_);
    }
  } else if (kind_ == Kind::constant) {
    a = point_;
  } else {
    const double p = param_;
    if (domain_->kind() == ConvexDomain::Kind::box) {
      a.resize(domain_->dim());
      for (int i = 0; i < domain_->dim(); ++i) {
        bool up = counter_uniform(seed_, t, static_cast<std::uint64_t>(i)) < p;
        a[i] = up ? domain_->upper()[i] : domain_->lower()[i];
      }
    } else {
      double u = counter_uniform(seed_, t, 0);
      auto idx = std::min(vertices_.size() - 1,
                          static_cast<std::size_t>(u * static_cast<double>(vertices_.size())));
      a = vertices_[idx];
    }
  }
  require(domain_->contains(a, 1e-12), "adversary: action outside C");
  return a;
}

void Adversary::record(const Vector& c, const Vector& a) {
  for (std::size_t k = 0; k < targets_.size(); ++k) running_[k] += targets_[k](c) * (a - c);
  if (replica_) {
    if (has_prediction_ && !same_bits(predicted_, c)) ++mismatches_;
    replica_->observe(c, a);
    has_prediction_ = false;
  }
}

ForecasterAbort::ForecasterAbort(std::size_t period, const std::string& what)
    : NumericalFailure("period " + std::to_string(period) + ": " + what), period_(period) {}

PlayResult play(Forecaster& forecaster, Adversary& adversary, std::size_t T, std::uint64_t seed) {
  require(T >= 1, "play: T must be positive");
  PlayResult out{Transcript(forecaster.domain()), 0};
  out.transcript.reserve(T);
  adversary.reset(forecaster, seed);
  for (std::size_t t = 1; t <= T; ++t) {
    Vector c;
    try {
      c = forecaster.next_forecast();
    } catch (const NumericalFailure& e) {
      throw ForecasterAbort(t, e.what());
    }
    Vector a = adversary.act(t, adversary.mode() == GameMode::leaky ? &c : nullptr);
    out.transcript.append(c, a);
    forecaster.observe(c, a);
    adversary.record(c, a);
  }
  out.replica_mismatches = adversary.replica_mismatches();
  return out;
}

double fixed_point_fraction(const Transcript& t, const std::function<Vector(const Vector&)>& g,
                            double tol) {
  require(!t.empty(), "fixed_point_fraction: empty transcript");
  std::size_t hits = 0;
  for (std::size_t s = 0; s < t.size(); ++s) {
    if ((g(t.forecast(s)) - t.forecast(s)).norm() <= tol) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(t.size());
}

}  // namespace smoothcal
