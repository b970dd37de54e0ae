#include "smoothcal/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace smoothcal {

namespace {

constexpr std::size_t kMaxGrid = 20'000'000;

int box_intervals(double extent, double h) {
  if (extent <= 0.0) return 0;
  double n = std::ceil(extent / h - 1e-12);
  return std::max(1, static_cast<int>(n));
}

int simplex_denominator(double h) {
  return std::max(1, static_cast<int>(std::ceil(1.0 / h - 1e-12)));
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

void compositions(int total, int parts, Vector& cur, int pos, double denom,
                  std::vector<Vector>& out) {
  if (pos == parts - 1) {
    cur[pos] = total / denom;
    out.push_back(cur);
    return;
  }
  for (int k = 0; k <= total; ++k) {
    cur[pos] = k / denom;
    compositions(total - k, parts, cur, pos + 1, denom, out);
  }
}

}  // namespace

BasisTooLarge::BasisTooLarge(std::size_t d, std::size_t cap)
    : InvalidArgument("basis size " + std::to_string(d) + " exceeds cap " + std::to_string(cap)),
      d_(d) {}

// ---------------------------------------------------------------------------
// ConvexDomain

ConvexDomain ConvexDomain::box(Vector lower, Vector upper) {
  require(lower.size() == upper.size() && lower.size() >= 1, "box: bound dimensions differ");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    require(std::isfinite(lower[i]) && std::isfinite(upper[i]), "box: bounds must be finite");
    require(lower[i] <= upper[i], "box: lower exceeds upper");
  }
  ConvexDomain d;
  d.kind_ = Kind::box;
  d.dim_ = static_cast<int>(lower.size());
  d.lower_ = std::move(lower);
  d.upper_ = std::move(upper);
  return d;
}

ConvexDomain ConvexDomain::unit_box(int m) {
  require(m >= 1, "unit_box: dimension must be positive");
  return box(Vector::Zero(m), Vector::Ones(m));
}

ConvexDomain ConvexDomain::simplex(int k) {
  require(k >= 1, "simplex: dimension must be at least 1");
  ConvexDomain d;
  d.kind_ = Kind::simplex;
  d.dim_ = k;
  d.lower_ = Vector::Zero(k);
  d.upper_ = Vector::Ones(k);
  if (k == 1) d.lower_[0] = 1.0;
  return d;
}

ConvexDomain ConvexDomain::product(std::vector<ConvexDomain> factors) {
  require(!factors.empty(), "product: no factors");
  ConvexDomain d;
  d.kind_ = Kind::product;
  for (const auto& f : factors) d.dim_ += f.dim();
  d.lower_.resize(d.dim_);
  d.upper_.resize(d.dim_);
  int off = 0;
  for (const auto& f : factors) {
    d.lower_.segment(off, f.dim()) = f.bounding_lower();
    d.upper_.segment(off, f.dim()) = f.bounding_upper();
    off += f.dim();
  }
  d.factors_ = std::move(factors);
  return d;
}

double ConvexDomain::diameter() const {
  switch (kind_) {
    case Kind::box:
      return (upper_ - lower_).norm();
    case Kind::simplex:
      return dim_ == 1 ? 0.0 : std::sqrt(2.0);
    case Kind::product: {
      double s = 0.0;
      for (const auto& f : factors_) s += f.diameter() * f.diameter();
      return std::sqrt(s);
    }
  }
  return 0.0;
}

Vector ConvexDomain::bounding_lower() const { return lower_; }
Vector ConvexDomain::bounding_upper() const { return upper_; }

bool ConvexDomain::inside_unit_cube() const {
  return (lower_.array() >= 0.0).all() && (upper_.array() <= 1.0).all();
}

bool ConvexDomain::contains(const Vector& x, double tol) const {
  if (x.size() != dim_) return false;
  switch (kind_) {
    case Kind::box:
      return ((x - lower_).array() >= -tol).all() && ((upper_ - x).array() >= -tol).all();
    case Kind::simplex:
      return (x.array() >= -tol).all() && std::abs(x.sum() - 1.0) <= tol * std::max(1, dim_);
    case Kind::product: {
      int off = 0;
      for (const auto& f : factors_) {
        if (!f.contains(x.segment(off, f.dim()), tol)) return false;
        off += f.dim();
      }
      return true;
    }
  }
  return false;
}

Vector project_simplex(const Vector& b) {
  const Eigen::Index k = b.size();
  std::vector<double> u(b.data(), b.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double tau = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    cum += u[j];
    double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  return (b.array() - tau).max(0.0).matrix();
}

void ConvexDomain::project_into(const Vector& b, int offset, Vector& out) const {
  switch (kind_) {
    case Kind::box:
      out.segment(offset, dim_) = b.segment(offset, dim_).cwiseMax(lower_).cwiseMin(upper_);
      return;
    case Kind::simplex:
      out.segment(offset, dim_) = project_simplex(b.segment(offset, dim_));
      return;
    case Kind::product:
      for (const auto& f : factors_) {
        f.project_into(b, offset, out);
        offset += f.dim();
      }
      return;
  }
}

Vector ConvexDomain::project(const Vector& b) const {
  require(b.size() == dim_, "project: dimension mismatch");
  Vector out(dim_);
  project_into(b, 0, out);
  return out;
}

std::size_t ConvexDomain::grid_size(double h) const {
  require(h > 0.0, "grid: step must be positive");
  double n = 1.0;
  switch (kind_) {
    case Kind::box:
      for (int i = 0; i < dim_; ++i) n *= box_intervals(upper_[i] - lower_[i], h) + 1;
      break;
    case Kind::simplex:
      n = binomial(simplex_denominator(h) + dim_ - 1, dim_ - 1);
      break;
    case Kind::product:
      for (const auto& f : factors_) n *= static_cast<double>(f.grid_size(h));
      break;
  }
  if (n > static_cast<double>(std::numeric_limits<std::size_t>::max() / 2)) {
    return std::numeric_limits<std::size_t>::max() / 2;
  }
  return static_cast<std::size_t>(n);
}

void ConvexDomain::grid_into(double h, std::vector<Vector>& out) const {
  switch (kind_) {
    case Kind::box: {
      std::vector<int> n(dim_);
      for (int i = 0; i < dim_; ++i) n[i] = box_intervals(upper_[i] - lower_[i], h);
      std::vector<int> k(dim_, 0);
      Vector p(dim_);
      while (true) {
        for (int i = 0; i < dim_; ++i) {
          p[i] = k[i] == n[i] ? upper_[i]
                              : lower_[i] + (upper_[i] - lower_[i]) * k[i] / std::max(1, n[i]);
        }
        out.push_back(p);
        int i = dim_ - 1;
        while (i >= 0 && k[i] == n[i]) k[i--] = 0;
        if (i < 0) break;
        ++k[i];
      }
      return;
    }
    case Kind::simplex: {
      int N = simplex_denominator(h);
      Vector cur(dim_);
      compositions(N, dim_, cur, 0, N, out);
      return;
    }
    case Kind::product: {
      std::vector<std::vector<Vector>> parts;
      for (const auto& f : factors_) parts.push_back(f.grid(h));
      std::vector<std::size_t> k(parts.size(), 0);
      Vector p(dim_);
      while (true) {
        int off = 0;
        for (std::size_t j = 0; j < parts.size(); ++j) {
          const Vector& q = parts[j][k[j]];
          p.segment(off, q.size()) = q;
          off += static_cast<int>(q.size());
        }
        out.push_back(p);
        int j = static_cast<int>(parts.size()) - 1;
        while (j >= 0 && k[j] + 1 == parts[j].size()) k[j--] = 0;
        if (j < 0) break;
        ++k[j];
      }
      return;
    }
  }
}

std::vector<Vector> ConvexDomain::grid(double h) const {
  std::size_t n = grid_size(h);
  require(n <= kMaxGrid, "grid: " + std::to_string(n) + " points requested, step too fine");
  std::vector<Vector> out;
  out.reserve(n);
  grid_into(h, out);
  return out;
}

void ConvexDomain::snap_into(const Vector& x, double h, int offset, Vector& out) const {
  switch (kind_) {
    case Kind::box:
      for (int i = 0; i < dim_; ++i) {
        double lo = lower_[i];
        double hi = upper_[i];
        int n = box_intervals(hi - lo, h);
        if (n == 0) {
          out[offset + i] = lo;
          continue;
        }
        double r = (x[offset + i] - lo) / (hi - lo) * n;
        double fl = std::floor(r);
        int k = static_cast<int>(fl) + (r - fl > 0.5 ? 1 : 0);
        k = std::clamp(k, 0, n);
        out[offset + i] = k == n ? hi : lo + (hi - lo) * k / n;
      }
      return;
    case Kind::simplex: {
      int N = simplex_denominator(h);
      Vector y = project_simplex(x.segment(offset, dim_)) * N;
      std::vector<long> units(dim_);
      std::vector<double> frac(dim_);
      long assigned = 0;
      for (int i = 0; i < dim_; ++i) {
        double fl = std::floor(y[i]);
        units[i] = static_cast<long>(fl);
        frac[i] = y[i] - fl;
        assigned += units[i];
      }
      long deficit = std::clamp<long>(N - assigned, 0, dim_);
      // Remaining units go to the largest remainders; on equal remainders the
      // higher index wins, which keeps the result lexicographically first.
      std::vector<int> order(dim_);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (frac[a] != frac[b]) return frac[a] > frac[b];
        return a > b;
      });
      for (long j = 0; j < deficit; ++j) ++units[order[j]];
      for (int i = 0; i < dim_; ++i) out[offset + i] = static_cast<double>(units[i]) / N;
      return;
    }
    case Kind::product:
      for (const auto& f : factors_) {
        f.snap_into(x, h, offset, out);
        offset += f.dim();
      }
      return;
  }
}

Vector ConvexDomain::snap(const Vector& x, double h) const {
  require(x.size() == dim_, "snap: dimension mismatch");
  require(h > 0.0, "snap: step must be positive");
  Vector out(dim_);
  snap_into(x, h, 0, out);
  return out;
}

nlohmann::json ConvexDomain::to_json() const {
  switch (kind_) {
    case Kind::box:
      return {{"kind", "box"},
              {"lower", std::vector<double>(lower_.data(), lower_.data() + dim_)},
              {"upper", std::vector<double>(upper_.data(), upper_.data() + dim_)}};
    case Kind::simplex:
      return {{"kind", "simplex"}, {"dim", dim_}};
    case Kind::product: {
      nlohmann::json fs = nlohmann::json::array();
      for (const auto& f : factors_) fs.push_back(f.to_json());
      return {{"kind", "product"}, {"factors", fs}};
    }
  }
  return {};
}

ConvexDomain ConvexDomain::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "box") {
    auto lo = j.at("lower").get<std::vector<double>>();
    auto hi = j.at("upper").get<std::vector<double>>();
    return box(Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
               Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size())));
  }
  if (kind == "simplex") return simplex(j.at("dim").get<int>());
  if (kind == "product") {
    std::vector<ConvexDomain> fs;
    for (const auto& f : j.at("factors")) fs.push_back(from_json(f));
    return product(std::move(fs));
  }
  throw InvalidArgument("unknown domain kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Nets

nlohmann::json Net::to_json() const {
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : centers) cs.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  return {{"radius", radius}, {"probe_step", probe_step}, {"coverage", coverage},
          {"size", size()}, {"centers", cs}};
}

Net maximal_net(const ConvexDomain& domain, double eps, int probe_density) {
  require(eps > 0.0 && std::isfinite(eps), "maximal_net: eps must be positive");
  require(probe_density >= 1, "maximal_net: probe density must be at least 1");
  Net net;
  net.radius = eps;
  net.probe_step = eps / probe_density;
  const double sep = 2.0 * eps;
  // Relative slack so probes at exactly 2eps on the lattice count as far.
  const double accept = sep * (1.0 - 1e-12);

  PointIndex index(domain.dim(), sep);
  for (const Vector& p : domain.grid(net.probe_step)) {
    bool far = true;
    index.for_each_near(p, [&](int id) {
      if (far && (net.centers[id] - p).norm() < accept) far = false;
    });
    if (far) {
      index.insert(net.size(), p);
      net.centers.push_back(p);
    }
  }

  double worst = 0.0;
  for (const Vector& p : domain.grid(net.probe_step / 2)) {
    double best = std::numeric_limits<double>::infinity();
    index.for_each_near(p, [&](int id) { best = std::min(best, (net.centers[id] - p).norm()); });
    worst = std::max(worst, best);
  }
  net.coverage = worst;
  if (!(worst <= sep + 1e-12)) {
    throw CoverageError("maximal_net: check grid point at distance " + std::to_string(worst) +
                        " from every center exceeds 2eps = " + std::to_string(sep) +
                        "; raise probe density");
  }
  return net;
}

// ---------------------------------------------------------------------------
// Partition of unity

PartitionOfUnity::PartitionOfUnity(ConvexDomain domain, Net net)
    : domain_(std::move(domain)), net_(std::move(net)), index_(domain_.dim(), 3.0 * net_.radius) {
  require(net_.size() >= 1, "partition: empty net");
  for (int k = 0; k < net_.size(); ++k) {
    require(net_.centers[k].size() == domain_.dim(), "partition: center dimension mismatch");
    index_.insert(k, net_.centers[k]);
  }
}

void PartitionOfUnity::evaluate(const Vector& x, std::vector<Term>& out) const {
  if (!domain_.contains(x, 1e-9)) throw InvalidArgument("partition: point outside the domain");
  out.clear();
  const double reach = 3.0 * net_.radius;
  // A hash query visits 3^m cells; small nets are cheaper to scan.
  if (static_cast<double>(size()) <= 8.0 * std::pow(3.0, domain_.dim())) {
    for (int k = 0; k < size(); ++k) {
      double a = reach - (x - net_.centers[k]).norm();
      if (a > 0.0) out.push_back({k, a});
    }
  } else {
    index_.for_each_near(x, [&](int k) {
      double a = reach - (x - net_.centers[k]).norm();
      if (a > 0.0) out.push_back({k, a});
    });
    std::sort(out.begin(), out.end(),
              [](const Term& a, const Term& b) { return a.index < b.index; });
  }
  double total = 0.0;
  for (const auto& t : out) total += t.weight;
  if (!(total > 0.0)) throw CoverageError("partition: point not covered by any tent");
  for (auto& t : out) t.weight /= total;
}

std::vector<PartitionOfUnity::Term> PartitionOfUnity::evaluate(const Vector& x) const {
  std::vector<Term> out;
  evaluate(x, out);
  return out;
}

Vector PartitionOfUnity::dense(const Vector& x) const {
  Vector out = Vector::Zero(size());
  for (const auto& t : evaluate(x)) out[t.index] = t.weight;
  return out;
}

std::vector<double> PartitionOfUnity::raw_tents(const Vector& x) const {
  std::vector<double> out(size());
  for (int k = 0; k < size(); ++k) {
    out[k] = std::max(0.0, 3.0 * net_.radius - (x - net_.centers[k]).norm());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bases

BasisFamily::BasisFamily(std::shared_ptr<const PartitionOfUnity> partition, int replication,
                         double lipschitz, double target_error)
    : partition_(std::move(partition)),
      m_(partition_->domain().dim()),
      q_(replication),
      lipschitz_(lipschitz),
      target_error_(target_error) {
  require(q_ >= 0, "basis: replication must be nonnegative");
  require(partition_->domain().inside_unit_cube(), "basis: domain must lie in the unit cube");
}

void BasisFamily::features(const Vector& x, Vector& out) const {
  out.setZero(dim());
  out.head(m_) = x;
  if (q_ == 0) return;
  thread_local std::vector<PartitionOfUnity::Term> terms;
  partition_->evaluate(x, terms);
  const double inv_q = 1.0 / q_;
  for (const auto& t : terms) {
    out.segment(m_ + static_cast<Eigen::Index>(t.index) * q_, q_).setConstant(t.weight * inv_q);
  }
}

void BasisFamily::sparse_features(const Vector& x, std::vector<Entry>& out) const {
  out.clear();
  for (int j = 0; j < m_; ++j) out.push_back({j, x[j]});
  if (q_ == 0) return;
  thread_local std::vector<PartitionOfUnity::Term> terms;
  partition_->evaluate(x, terms);
  const double inv_q = 1.0 / q_;
  for (const auto& t : terms) {
    for (int r = 0; r < q_; ++r) out.push_back({m_ + t.index * q_ + r, t.weight * inv_q});
  }
}

Vector BasisFamily::features(const Vector& x) const {
  Vector out;
  features(x, out);
  return out;
}

double BasisFamily::member(int i, const Vector& x) const {
  require(i >= 0 && i < dim(), "basis: member index out of range");
  if (i < m_) return x[i];
  int k = (i - m_) / q_;
  for (const auto& t : partition_->evaluate(x)) {
    if (t.index == k) return t.weight / q_;
  }
  return 0.0;
}

nlohmann::json BasisFamily::to_json() const {
  return {{"d", dim()},
          {"m", m_},
          {"Q", q_},
          {"L", lipschitz_},
          {"eps", target_error_},
          {"domain", domain().to_json()},
          {"net", partition_->net().to_json()}};
}

BasisFamily lipschitz_basis(const ConvexDomain& domain, double L, double eps, std::size_t cap,
                            int probe_density) {
  require(L >= 1.0, "lipschitz_basis: L must be at least 1");
  require(eps > 0.0 && eps <= 1.0, "lipschitz_basis: eps must lie in (0, 1]");
  require(domain.inside_unit_cube(), "lipschitz_basis: domain must lie in the unit cube");
  const int m = domain.dim();
  const double eps1 = eps / (3.0 * L);
  const double q = std::ceil(std::pow(4.0, m + 2) / (eps1 * L));
  if (q > static_cast<double>(cap)) throw BasisTooLarge(static_cast<std::size_t>(q), cap);
  Net net = maximal_net(domain, eps1, probe_density);
  const std::size_t d = static_cast<std::size_t>(m) + net.centers.size() * static_cast<std::size_t>(q);
  if (d > cap) throw BasisTooLarge(d, cap);
  auto pou = std::make_shared<const PartitionOfUnity>(domain, std::move(net));
  return BasisFamily(std::move(pou), static_cast<int>(q), L, eps);
}

BasisFamily partition_basis(const ConvexDomain& domain, double net_radius, double lipschitz,
                            int probe_density) {
  auto pou = std::make_shared<const PartitionOfUnity>(
      domain, maximal_net(domain, net_radius, probe_density));
  return BasisFamily(std::move(pou), 1, lipschitz, 3.0 * lipschitz * net_radius);
}

Vector approximate_weights(const BasisFamily& basis, const WeightFunction& w) {
  const auto& pou = basis.partition();
  const auto& net = pou.net();
  auto in_range = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (const Vector& p : basis.domain().grid(net.probe_step)) {
    if (!in_range(w(p))) throw InvalidArgument("weight '" + w.name + "' leaves [0,1] at a probe point");
  }
  Vector out = Vector::Zero(basis.dim());
  const int q = basis.replication();
  for (int k = 0; k < pou.size(); ++k) {
    double v = w(net.centers[k]);
    if (!in_range(v)) throw InvalidArgument("weight '" + w.name + "' leaves [0,1] at a center");
    out.segment(basis.coords() + static_cast<Eigen::Index>(k) * q, q).setConstant(v);
  }
  return out;
}

double approximation_error(const BasisFamily& basis, const Vector& weights,
                           const WeightFunction& w, const std::vector<Vector>& probes) {
  require(weights.size() == basis.dim(), "approximation_error: weight dimension mismatch");
  double worst = 0.0;
  Vector f;
  for (const Vector& p : probes) {
    basis.features(p, f);
    worst = std::max(worst, std::abs(w(p) - weights.dot(f)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Smoothed best replies

SmoothBestReply::SmoothBestReply(std::shared_ptr<const PartitionOfUnity> partition,
                                 std::vector<Vector> replies, double eps, double lipschitz)
    : partition_(std::move(partition)), replies_(std::move(replies)), eps_(eps), lipschitz_(lipschitz) {
  require(static_cast<int>(replies_.size()) == partition_->size(),
          "smooth best reply: one reply per center required");
}

Vector SmoothBestReply::operator()(const Vector& c) const {
  thread_local std::vector<PartitionOfUnity::Term> terms;
  partition_->evaluate(c, terms);
  Vector out = Vector::Zero(replies_.front().size());
  for (const auto& t : terms) out += t.weight * replies_[t.index];
  return out;
}

SmoothBestReply smooth_best_reply(const OwnPayoff& payoff, const ConvexDomain& domain, double eps,
                                  double net_radius, int probe_density) {
  require(eps > 0.0, "smooth_best_reply: eps must be positive");
  require(payoff.lipschitz > 0.0 || net_radius > 0.0,
          "smooth_best_reply: payoff Lipschitz bound must be positive");
  require(payoff.offset >= 0 && payoff.length >= 1 && payoff.offset + payoff.length <= domain.dim(),
          "smooth_best_reply: player block outside the profile");
  double radius = net_radius > 0.0 ? net_radius : eps / (6.0 * payoff.lipschitz);
  auto pou = std::make_shared<const PartitionOfUnity>(domain, maximal_net(domain, radius, probe_density));
  std::vector<Vector> replies;
  replies.reserve(pou->size());
  for (const Vector& z : pou->net().centers) {
    Vector r = payoff.best_reply(z);
    require(r.size() == payoff.length, "smooth_best_reply: best reply has the wrong length");
    replies.push_back(std::move(r));
  }
  return SmoothBestReply(std::move(pou), std::move(replies), eps, payoff.lipschitz);
}

BestReplyCheck check_best_reply(const SmoothBestReply& g, const OwnPayoff& payoff,
                                const std::vector<Vector>& probes, double eps) {
  BestReplyCheck out;
  Vector profile;
  for (const Vector& c : probes) {
    profile = c;
    profile.segment(payoff.offset, payoff.length) = g(c);
    double gap = payoff.best_value(c) - payoff.value(profile);
    out.worst_gap = std::max(out.worst_gap, gap);
    if (gap > eps + 1e-12) ++out.violations;
    ++out.probes;
  }
  return out;
}

double best_reply_lipschitz_factor(int m) {
  require(m >= 1, "best_reply_lipschitz_factor: m must be positive");
  return std::pow(std::sqrt(static_cast<double>(m)), m + 1) * std::pow(4.0, m + 2) *
         std::pow(6.0, m + 1);
}

}  // namespace smoothcal
