#pragma once

#include "smoothcal/spatial_index.hpp"
#include "smoothcal/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace smoothcal {

class CoverageError : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class BasisTooLarge : public InvalidArgument {
 public:
  BasisTooLarge(std::size_t d, std::size_t cap);
  std::size_t size() const { return d_; }

 private:
  std::size_t d_;
};

// Compact convex set: an axis-aligned box, a probability simplex, or a
// Cartesian product of those.
class ConvexDomain {
 public:
  enum class Kind { box, simplex, product };

  static ConvexDomain box(Vector lower, Vector upper);
  static ConvexDomain unit_box(int m);
  static ConvexDomain simplex(int k);
  static ConvexDomain product(std::vector<ConvexDomain> factors);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double diameter() const;
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const std::vector<ConvexDomain>& factors() const { return factors_; }

  bool contains(const Vector& x, double tol = 1e-12) const;
  Vector project(const Vector& b) const;

  // Componentwise bounds of the set.
  Vector bounding_lower() const;
  Vector bounding_upper() const;
  bool inside_unit_cube() const;

  // Lattice of step at most h: boxes use ceil(extent/h) equal intervals per
  // axis, simplices the compositions with denominator ceil(1/h). Points are
  // ordered lexicographically (first coordinate slowest).
  std::size_t grid_size(double h) const;
  std::vector<Vector> grid(double h) const;
  // Nearest lattice point; ties go to the lexicographically first candidate.
  Vector snap(const Vector& x, double h) const;

  nlohmann::json to_json() const;
  static ConvexDomain from_json(const nlohmann::json& j);

 private:
  ConvexDomain() = default;
  void grid_into(double h, std::vector<Vector>& out) const;
  void snap_into(const Vector& x, double h, int offset, Vector& out) const;
  void project_into(const Vector& b, int offset, Vector& out) const;

  Kind kind_ = Kind::box;
  int dim_ = 0;
  Vector lower_;
  Vector upper_;
  std::vector<ConvexDomain> factors_;
};

// Euclidean projection onto the probability simplex (sort and threshold).
Vector project_simplex(const Vector& b);

struct Net {
  std::vector<Vector> centers;
  double radius = 0.0;
  double probe_step = 0.0;
  double coverage = 0.0;  // worst nearest-center distance on the check grid

  int size() const { return static_cast<int>(centers.size()); }
  nlohmann::json to_json() const;
};

// Greedy maximal 2eps-separated set over a lexicographic probe grid of step
// eps/probe_density. Coverage is re-checked on a grid twice as fine.
Net maximal_net(const ConvexDomain& domain, double eps, int probe_density = 4);

// Tent weights alpha_k(x) = [3eps - |x - z_k|]_+ normalised to sum to one.
class PartitionOfUnity {
 public:
  struct Term {
    int index;
    double weight;
  };

  PartitionOfUnity(ConvexDomain domain, Net net);

  const ConvexDomain& domain() const { return domain_; }
  const Net& net() const { return net_; }
  int size() const { return net_.size(); }
  double eps() const { return net_.radius; }

  // Nonzero beta_k(x) in increasing k.
  std::vector<Term> evaluate(const Vector& x) const;
  void evaluate(const Vector& x, std::vector<Term>& out) const;
  Vector dense(const Vector& x) const;
  std::vector<double> raw_tents(const Vector& x) const;

 private:
  ConvexDomain domain_;
  Net net_;
  PointIndex index_;
};

// Coordinate functions followed by Q copies of beta_k/Q for every net
// center. Q = 0 leaves the coordinate functions only.
class BasisFamily {
 public:
  BasisFamily(std::shared_ptr<const PartitionOfUnity> partition, int replication,
              double lipschitz, double target_error);

  int dim() const { return static_cast<int>(m_ + partition_->size() * q_); }
  int coords() const { return m_; }
  int replication() const { return q_; }
  double lipschitz() const { return lipschitz_; }
  double target_error() const { return target_error_; }
  const PartitionOfUnity& partition() const { return *partition_; }
  const ConvexDomain& domain() const { return partition_->domain(); }

  Vector features(const Vector& x) const;
  void features(const Vector& x, Vector& out) const;
  // Nonzero entries of features(x) in increasing index; the coordinate
  // entries are always present.
  struct Entry {
    int index;
    double value;
  };
  void sparse_features(const Vector& x, std::vector<Entry>& out) const;
  double member(int i, const Vector& x) const;

  nlohmann::json to_json() const;

 private:
  std::shared_ptr<const PartitionOfUnity> partition_;
  int m_;
  int q_;
  double lipschitz_;
  double target_error_;
};

inline constexpr std::size_t kDefaultBasisCap = 10000;

BasisFamily lipschitz_basis(const ConvexDomain& domain, double L, double eps,
                            std::size_t cap = kDefaultBasisCap, int probe_density = 4);

// Q = 1 partition over a net of explicit radius plus the coordinate
// functions; used where the full construction is too large.
BasisFamily partition_basis(const ConvexDomain& domain, double net_radius, double lipschitz,
                            int probe_density = 4);

struct WeightFunction {
  std::string name;
  double lipschitz = 0.0;
  std::function<double(const Vector&)> fn;

  double operator()(const Vector& x) const { return fn(x); }
};

Vector approximate_weights(const BasisFamily& basis, const WeightFunction& w);
double approximation_error(const BasisFamily& basis, const Vector& weights,
                           const WeightFunction& w, const std::vector<Vector>& probes);

// One player's payoff as a function of the full profile, together with the
// exact best-reply oracle the construction needs at net centers.
struct OwnPayoff {
  int offset = 0;  // first coordinate of the player's block in the profile
  int length = 0;
  double lipschitz = 0.0;
  std::function<double(const Vector& profile)> value;
  std::function<Vector(const Vector& profile)> best_reply;
  std::function<double(const Vector& profile)> best_value;
};

class SmoothBestReply {
 public:
  SmoothBestReply(std::shared_ptr<const PartitionOfUnity> partition, std::vector<Vector> replies,
                  double eps, double lipschitz);

  Vector operator()(const Vector& c) const;
  const PartitionOfUnity& partition() const { return *partition_; }
  double eps() const { return eps_; }
  double payoff_lipschitz() const { return lipschitz_; }
  const std::vector<Vector>& replies() const { return replies_; }

 private:
  std::shared_ptr<const PartitionOfUnity> partition_;
  std::vector<Vector> replies_;
  double eps_;
  double lipschitz_;
};

// Net radius eps/(6L) unless `net_radius` is positive.
SmoothBestReply smooth_best_reply(const OwnPayoff& payoff, const ConvexDomain& domain, double eps,
                                  double net_radius = 0.0, int probe_density = 4);

struct BestReplyCheck {
  double worst_gap = 0.0;
  std::size_t violations = 0;
  std::size_t probes = 0;
};

BestReplyCheck check_best_reply(const SmoothBestReply& g, const OwnPayoff& payoff,
                                const std::vector<Vector>& probes, double eps);

// sqrt(m)^(m+1) 4^(m+2) 6^(m+1): upper bound on the Lipschitz factor of the
// smoothed best reply, L_g <= nu_m (L/eps)^(m+1).
double best_reply_lipschitz_factor(int m);

}  // namespace smoothcal
