#pragma once

#include "smoothcal/scores.hpp"
#include "smoothcal/weak_calibration.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace smoothcal {

// C-player. All strategies here are deterministic.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::string name() const = 0;
  virtual const ConvexDomain& domain() const = 0;
  virtual Vector next_forecast() = 0;
  virtual void observe(const Vector& c, const Vector& a) = 0;
  virtual std::unique_ptr<Forecaster> clone() const = 0;
  virtual nlohmann::json describe() const = 0;
};

class WeakCalibratedPlayer : public Forecaster {
 public:
  explicit WeakCalibratedPlayer(std::shared_ptr<const ForecasterConfig> config);

  std::string name() const override { return "weak_calibrated"; }
  const ConvexDomain& domain() const override { return engine_.config().domain(); }
  Vector next_forecast() override { return engine_.next_forecast(); }
  void observe(const Vector& c, const Vector& a) override { engine_.observe(c, a); }
  std::unique_ptr<Forecaster> clone() const override;
  nlohmann::json describe() const override;

  const WeakCalibratedForecaster& engine() const { return engine_; }

 private:
  WeakCalibratedForecaster engine_;
};

// Cycles through a fixed list of forecasts (two values give the
// odd/even alternation).
class AlternatingForecaster : public Forecaster {
 public:
  AlternatingForecaster(ConvexDomain domain, std::vector<Vector> cycle);

  std::string name() const override { return "alternating"; }
  const ConvexDomain& domain() const override { return domain_; }
  Vector next_forecast() override { return cycle_[t_ % cycle_.size()]; }
  void observe(const Vector&, const Vector&) override { ++t_; }
  std::unique_ptr<Forecaster> clone() const override;
  nlohmann::json describe() const override;

 private:
  ConvexDomain domain_;
  std::vector<Vector> cycle_;
  std::size_t t_ = 0;
};

class ConstantForecaster : public Forecaster {
 public:
  ConstantForecaster(ConvexDomain domain, Vector c);

  std::string name() const override { return "constant"; }
  const ConvexDomain& domain() const override { return domain_; }
  Vector next_forecast() override { return c_; }
  void observe(const Vector&, const Vector&) override {}
  std::unique_ptr<Forecaster> clone() const override;
  nlohmann::json describe() const override;

 private:
  ConvexDomain domain_;
  Vector c_;
};

enum class GameMode { standard, leaky };
std::string to_string(GameMode m);

// A-player. Reactive kinds (threshold, reaction, simulating best response)
// need c_t: in leaky mode it is handed over, in standard mode the adversary
// recomputes it with its own replica of the forecaster.
class Adversary {
 public:
  enum class Kind { threshold, constant, seeded_random, reaction, simulating_best_response };

  // Coordinatewise: upper bound where c_i < cut, lower bound otherwise
  // (box domains).
  static Adversary threshold(double cut, GameMode mode = GameMode::leaky);
  static Adversary constant(Vector a);
  // Random vertex of C: Bernoulli(p) per box coordinate, uniform vertex of
  // a simplex; keyed by (seed, t).
  static Adversary seeded_random(double p = 0.5);
  static Adversary reaction(std::string name, std::function<Vector(const Vector&)> g,
                            GameMode mode = GameMode::leaky);
  // Picks the vertex of C that maximizes the largest running weak score
  // over the targets after this period.
  static Adversary simulating_best_response(std::vector<WeightFunction> targets,
                                            GameMode mode = GameMode::leaky);

  Adversary(const Adversary& other);
  Adversary& operator=(const Adversary& other);
  Adversary(Adversary&&) = default;
  Adversary& operator=(Adversary&&) = default;

  Kind kind() const { return kind_; }
  GameMode mode() const { return mode_; }
  bool reactive() const;
  std::string name() const;
  nlohmann::json describe() const;

  // Called once before period 1.
  void reset(const Forecaster& forecaster, std::uint64_t seed);
  // `leaked` is c_t in leaky mode and nullptr otherwise.
  Vector act(std::size_t t, const Vector* leaked);
  // Called after every period with the realized pair.
  void record(const Vector& c, const Vector& a);
  std::size_t replica_mismatches() const { return mismatches_; }

 private:
  Adversary(Kind kind, GameMode mode) : kind_(kind), mode_(mode) {}
  Vector respond(std::size_t t, const Vector& c);

  Kind kind_;
  GameMode mode_;
  double param_ = 0.0;
  Vector point_;
  std::string label_;
  std::function<Vector(const Vector&)> g_;
  std::vector<WeightFunction> targets_;

  std::uint64_t seed_ = 0;
  std::shared_ptr<const ConvexDomain> domain_;
  std::vector<Vector> vertices_;
  std::unique_ptr<Forecaster> replica_;
  std::vector<Vector> running_;  // per target: sum_s w(c_s)(a_s - c_s)
  Vector predicted_;
  bool has_prediction_ = false;
  std::size_t mismatches_ = 0;
};

std::string to_string(Adversary::Kind k);

// A forecaster failure, tagged with the period (1-based) where it occurred.
class ForecasterAbort : public NumericalFailure {
 public:
  ForecasterAbort(std::size_t period, const std::string& what);
  std::size_t period() const { return period_; }

 private:
  std::size_t period_;
};

struct PlayResult {
  Transcript transcript;
  std::size_t replica_mismatches = 0;  // standard mode: replica forecast != actual
};

// Runs T periods. Errors from the forecaster are rethrown with the period
// index.
PlayResult play(Forecaster& forecaster, Adversary& adversary, std::size_t T, std::uint64_t seed);

// Fraction of periods with ||g(c_t) - c_t|| <= tol.
double fixed_point_fraction(const Transcript& t, const std::function<Vector(const Vector&)>& g,
                            double tol);

// Vertices of a box (lexicographic, lower before upper), a simplex, or a
// product of those.
std::vector<Vector> domain_vertices(const ConvexDomain& domain);

}  // namespace smoothcal
