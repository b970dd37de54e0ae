#include "smoothcal/scores.hpp"

#include "smoothcal/io.hpp"
#include "smoothcal/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>

namespace smoothcal {

namespace {

bool same_bits(const Vector& x, const Vector& y) {
  return x.size() == y.size() &&
         std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
}

std::string bit_key(const Vector& x) {
  return std::string(reinterpret_cast<const char*>(x.data()),
                     sizeof(double) * static_cast<std::size_t>(x.size()));
}

void require_nonempty(const Transcript& t) {
  require(!t.empty(), "score of an empty transcript");
}

}  // namespace

Transcript::Transcript(ConvexDomain domain) : domain_(std::move(domain)) {}

void Transcript::append(const Vector& c, const Vector& a) {
  require(c.size() == dim() && a.size() == dim(), "Transcript: dimension mismatch");
  require(domain_.contains(c, 1e-12), "Transcript: forecast outside the domain");
  require(domain_.contains(a, 1e-12), "Transcript: action outside the domain");
  c_.push_back(c);
  a_.push_back(a);
}

void Transcript::reserve(std::size_t n) {
  c_.reserve(n);
  a_.reserve(n);
}

void Transcript::write_csv(std::ostream& os) const {
  const int m = dim();
  os << "t";
  for (int i = 1; i <= m; ++i) os << ",c_" << i;
  for (int i = 1; i <= m; ++i) os << ",a_" << i;
  os << '\n';
  for (std::size_t t = 0; t < size(); ++t) {
    os << (t + 1);
    for (int i = 0; i < m; ++i) os << ',' << format_double(c_[t][i]);
    for (int i = 0; i < m; ++i) os << ',' << format_double(a_[t][i]);
    os << '\n';
  }
}

Transcript Transcript::read_csv(std::istream& is, const ConvexDomain& domain) {
  const int m = domain.dim();
  Transcript out(domain);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "transcript CSV: missing header");
  auto header = split_csv_line(line);
  require(header.size() == static_cast<std::size_t>(1 + 2 * m) && header[0] == "t",
          "transcript CSV: expected columns t, c_1..c_m, a_1..a_m");
  std::size_t expected = 1;
  Vector c(m), a(m);
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    require(cells.size() == header.size(),
            "transcript CSV: wrong column count at row " + std::to_string(expected));
    require(parse_double(cells[0]) == static_cast<double>(expected),
            "transcript CSV: periods must be numbered 1, 2, ...");
    for (int i = 0; i < m; ++i) {
      c[i] = parse_double(cells[1 + i]);
      a[i] = parse_double(cells[1 + m + i]);
    }
    out.append(c, a);
    ++expected;
  }
  return out;
}

bool operator==(const Transcript& x, const Transcript& y) {
  if (x.size() != y.size() || x.dim() != y.dim()) return false;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (!same_bits(x.c_[t], y.c_[t]) || !same_bits(x.a_[t], y.a_[t])) return false;
  }
  return true;
}

SmoothingKernel SmoothingKernel::indicator() { return SmoothingKernel(Kind::indicator, 0.0); }

SmoothingKernel SmoothingKernel::tent(double delta) {
  require(delta > 0.0 && std::isfinite(delta), "tent kernel: width must be positive");
  return SmoothingKernel(Kind::tent, delta);
}

SmoothingKernel SmoothingKernel::gaussian(double sigma) {
  require(sigma > 0.0 && std::isfinite(sigma), "gaussian kernel: sigma must be positive");
  return SmoothingKernel(Kind::gaussian, sigma);
}

double SmoothingKernel::lipschitz() const {
  switch (kind_) {
    case Kind::indicator:
      return std::numeric_limits<double>::infinity();
    case Kind::tent:
      return 1.0 / width_;
    case Kind::gaussian:
      return std::exp(-0.5) / width_;
  }
  return 0.0;
}

double SmoothingKernel::support_radius() const {
  switch (kind_) {
    case Kind::indicator:
      return 0.0;
    case Kind::tent:
      return width_;
    case Kind::gaussian:
      return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

double SmoothingKernel::operator()(const Vector& c_prime, const Vector& c) const {
  switch (kind_) {
    case Kind::indicator:
      return same_bits(c_prime, c) ? 1.0 : 0.0;
    case Kind::tent:
      return std::max(0.0, 1.0 - (c_prime - c).norm() / width_);
    case Kind::gaussian:
      return std::exp(-(c_prime - c).squaredNorm() / (2.0 * width_ * width_));
  }
  return 0.0;
}

std::string to_string(SmoothingKernel::Kind k) {
  switch (k) {
    case SmoothingKernel::Kind::indicator:
      return "indicator";
    case SmoothingKernel::Kind::tent:
      return "tent";
    case SmoothingKernel::Kind::gaussian:
      return "gaussian";
  }
  return "?";
}

std::string SmoothingKernel::name() const {
  if (kind_ == Kind::indicator) return "indicator";
  return to_string(kind_) + "(" + format_double(width_) + ")";
}

nlohmann::json SmoothingKernel::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind_)}};
  if (kind_ != Kind::indicator) j["width"] = width_;
  double L = lipschitz();
  j["lipschitz"] = std::isfinite(L) ? nlohmann::json(L) : nlohmann::json(nullptr);
  return j;
}

SmoothingKernel SmoothingKernel::from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("kind"), "kernel: expected an object with 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "indicator") return indicator();
  require(j.contains("width"), "kernel: missing 'width'");
  double w = j.at("width").get<double>();
  if (kind == "tent") return tent(w);
  if (kind == "gaussian") return gaussian(w);
  throw InvalidArgument("kernel: unknown kind '" + kind + "'");
}

KernelSums kernel_sums(const std::vector<Vector>& points, const std::vector<Vector>& values,
                       const SmoothingKernel& kernel) {
  require(!points.empty(), "kernel_sums: no points");
  require(points.size() == values.size(), "kernel_sums: points and values differ in length");
  const Eigen::Index k = values.front().size();
  const int m = static_cast<int>(points.front().size());

  KernelSums out;
  out.group_of.resize(points.size());
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Vector> raw;
  for (std::size_t t = 0; t < points.size(); ++t) {
    require(points[t].size() == m && values[t].size() == k, "kernel_sums: dimension mismatch");
    auto [it, fresh] = index.emplace(bit_key(points[t]), out.centers.size());
    if (fresh) {
      out.centers.push_back(points[t]);
      out.count.push_back(0.0);
      raw.push_back(Vector::Zero(k));
    }
    out.group_of[t] = it->second;
    out.count[it->second] += 1.0;
    raw[it->second] += values[t];
  }

  const std::size_t G = out.centers.size();
  out.weight.assign(G, 0.0);
  out.sums = Matrix::Zero(k, static_cast<Eigen::Index>(G));

  auto accumulate = [&](std::size_t g, std::size_t h) {
    double lam = kernel(out.centers[h], out.centers[g]);
    if (lam <= 0.0) return;
    out.weight[g] += lam * out.count[h];
    out.sums.col(static_cast<Eigen::Index>(g)) += lam * raw[h];
  };

  switch (kernel.kind()) {
    case SmoothingKernel::Kind::indicator:
      for (std::size_t g = 0; g < G; ++g) {
        out.weight[g] = out.count[g];
        out.sums.col(static_cast<Eigen::Index>(g)) = raw[g];
      }
      break;
    case SmoothingKernel::Kind::tent: {
      PointIndex near(m, kernel.width());
      for (std::size_t g = 0; g < G; ++g) near.insert(static_cast<int>(g), out.centers[g]);
      std::vector<int> ids;
      for (std::size_t g = 0; g < G; ++g) {
        ids = near.near(out.centers[g]);
        std::sort(ids.begin(), ids.end());
        for (int h : ids) accumulate(g, static_cast<std::size_t>(h));
      }
      break;
    }
    case SmoothingKernel::Kind::gaussian:
      for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t h = 0; h < G; ++h) accumulate(g, h);
      }
      break;
  }
  return out;
}

namespace {

// Stacks (a_t, c_t) so one pass yields both smoothed averages.
KernelSums stacked_sums(const Transcript& t, const SmoothingKernel& kernel) {
  const int m = t.dim();
  std::vector<Vector> values(t.size(), Vector(2 * m));
  for (std::size_t s = 0; s < t.size(); ++s) {
    values[s].head(m) = t.action(s);
    values[s].tail(m) = t.forecast(s);
  }
  return kernel_sums(t.forecasts(), values, kernel);
}

// Smoothed forecast for group g. For the indicator kernel it is the
// forecast itself, bit for bit.
Vector smoothed_center(const KernelSums& ks, const SmoothingKernel& kernel, std::size_t g,
                       int m) {
  if (kernel.kind() == SmoothingKernel::Kind::indicator) return ks.centers[g];
  return ks.sums.col(static_cast<Eigen::Index>(g)).tail(m) / ks.weight[g];
}

}  // namespace

SmoothedScores smoothed_scores(const Transcript& t, const SmoothingKernel& kernel) {
  require_nonempty(t);
  const int m = t.dim();
  KernelSums ks = stacked_sums(t, kernel);
  double K = 0.0, K_tilde = 0.0;
  for (std::size_t g = 0; g < ks.centers.size(); ++g) {
    Vector a_bar = ks.sums.col(static_cast<Eigen::Index>(g)).head(m) / ks.weight[g];
    Vector c_bar = smoothed_center(ks, kernel, g, m);
    K += ks.count[g] * (a_bar - c_bar).norm();
    K_tilde += ks.count[g] * (a_bar - ks.centers[g]).norm();
  }
  const double T = static_cast<double>(t.size());
  return {K / T, K_tilde / T};
}

double smoothed_score(const Transcript& t, const SmoothingKernel& kernel,
                      SmoothingVariant variant) {
  SmoothedScores s = smoothed_scores(t, kernel);
  return variant == SmoothingVariant::both_smoothed ? s.K : s.K_tilde;
}

double calibration_score(const Transcript& t) {
  return smoothed_scores(t, SmoothingKernel::indicator()).K;
}

SmoothedPath smoothed_path(const Transcript& t, const SmoothingKernel& kernel) {
  require_nonempty(t);
  const int m = t.dim();
  KernelSums ks = stacked_sums(t, kernel);
  std::vector<Vector> a_bar(ks.centers.size()), c_bar(ks.centers.size());
  for (std::size_t g = 0; g < ks.centers.size(); ++g) {
    a_bar[g] = ks.sums.col(static_cast<Eigen::Index>(g)).head(m) / ks.weight[g];
    c_bar[g] = smoothed_center(ks, kernel, g, m);
  }
  SmoothedPath out;
  out.a_bar.reserve(t.size());
  out.c_bar.reserve(t.size());
  for (std::size_t s = 0; s < t.size(); ++s) {
    out.a_bar.push_back(a_bar[ks.group_of[s]]);
    out.c_bar.push_back(c_bar[ks.group_of[s]]);
  }
  return out;
}

double weak_score(const Transcript& t, const WeightFunction& w) {
  require_nonempty(t);
  Vector acc = Vector::Zero(t.dim());
  for (std::size_t s = 0; s < t.size(); ++s) {
    acc += w(t.forecast(s)) * (t.action(s) - t.forecast(s));
  }
  return (acc / static_cast<double>(t.size())).norm();
}

IndicatorBound indicator_sup_bound(const Transcript& t) {
  require_nonempty(t);
  const int m = t.dim();
  // Rows: actions, then residuals a - c.
  std::vector<Vector> values(t.size(), Vector(2 * m));
  for (std::size_t s = 0; s < t.size(); ++s) {
    values[s].head(m) = t.action(s);
    values[s].tail(m) = t.action(s) - t.forecast(s);
  }
  KernelSums ks = kernel_sums(t.forecasts(), values, SmoothingKernel::indicator());
  const double T = static_cast<double>(t.size());

  IndicatorBound out;
  for (int i = 0; i < m; ++i) {
    Vector plus = Vector::Zero(m), minus = Vector::Zero(m);
    for (std::size_t g = 0; g < ks.centers.size(); ++g) {
      auto col = ks.sums.col(static_cast<Eigen::Index>(g));
      double gap = col[i] / ks.count[g] - ks.centers[g][i];
      if (gap > 0.0) plus += col.tail(m);
      if (gap < 0.0) minus += col.tail(m);
    }
    out.sup_S = std::max({out.sup_S, plus.norm() / T, minus.norm() / T});
  }
  out.K = calibration_score(t);
  return out;
}

double averaging_constant(int m, double alpha) {
  require(m >= 1, "averaging_constant: dimension must be positive");
  require(alpha > 0.0, "averaging_constant: diameter must be positive");
  const double md = m;
  return 2.0 * std::pow(2.0, (md + 3.0) / 2.0) * std::pow(alpha, md / 2.0) *
         std::pow(md, md / 4.0);
}

AveragingBound averaging_bound(const std::vector<Vector>& forecasts,
                               const std::vector<Vector>& residuals,
                               const SmoothingKernel& kernel, double alpha) {
  require(!forecasts.empty(), "averaging_bound: no forecasts");
  for (const auto& b : residuals) {
    require(b.norm() <= alpha * (1.0 + 1e-12), "averaging_bound: residual exceeds the diameter");
  }
  const int m = static_cast<int>(forecasts.front().size());
  KernelSums ks = kernel_sums(forecasts, residuals, kernel);
  const double T = static_cast<double>(forecasts.size());

  AveragingBound out;
  double max_B = 0.0;
  for (std::size_t g = 0; g < ks.centers.size(); ++g) {
    double B = ks.sums.col(static_cast<Eigen::Index>(g)).norm();
    out.lhs += ks.count[g] * B / ks.weight[g];
    max_B = std::max(max_B, B);
  }
  out.lhs /= T;
  out.kappa = max_B / T;
  out.gamma = averaging_constant(m, alpha);
  out.rhs = out.gamma * std::pow(kernel.lipschitz(), m / 2.0) * std::sqrt(out.kappa);
  if (std::isnan(out.rhs)) out.rhs = std::numeric_limits<double>::infinity();
  return out;
}

ConversionConstants conversion_constants(ConversionDirection dir, double eps, double L, int m,
                                         double gamma) {
  require(eps >= 0.0, "conversion_constants: eps must be nonnegative");
  require(L >= 1.0, "conversion_constants: L must be at least 1");
  require(m >= 1, "conversion_constants: dimension must be positive");
  const double md = m;
  ConversionConstants out;
  if (dir == ConversionDirection::weak_to_smooth) {
    require(gamma > 0.0, "conversion_constants: gamma must be positive");
    out.eps_prime = gamma * std::pow(L, md / 2.0) * std::sqrt(eps);
    out.L_prime = L;
  } else {
    out.eps1 = std::sqrt(eps * std::pow(L, md));
    out.L_prime = L * out.eps1 / 2.0;
    out.eps_prime = out.eps1 * (1.0 + std::sqrt(md) + std::sqrt(std::pow(md, md + 1.0)));
  }
  return out;
}

std::vector<WeightFunction> weight_presets(const ConvexDomain& domain) {
  require(domain.inside_unit_cube(), "weight_presets: domain must lie in the unit cube");
  const int m = domain.dim();
  std::vector<WeightFunction> out;
  out.push_back({"one", 0.0, [](const Vector&) { return 1.0; }});
  for (int j = 0; j < m; ++j) {
    out.push_back({"coord_" + std::to_string(j + 1), 1.0, [j](const Vector& c) { return c[j]; }});
  }
  Vector centre = 0.5 * (domain.bounding_lower() + domain.bounding_upper());
  double radius = std::max(domain.diameter() / 2.0, 1e-12);
  out.push_back({"bump_centre", 1.0 / radius, [centre, radius](const Vector& c) {
                   return std::max(0.0, 1.0 - (c - centre).norm() / radius);
                 }});
  return out;
}

}  // namespace smoothcal
