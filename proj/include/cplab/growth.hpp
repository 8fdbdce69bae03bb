#pragma once

// Growth certificates: primarily complete bounding functions, positively
// complete potentials, sampled affine bounds on field gauges and the
// proper-map criterion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cplab/error.hpp"
#include "cplab/expr.hpp"
#include "cplab/geom.hpp"

namespace cplab::growth {

enum class TagKind { Affine, Poly, XLogIterates, UserDivergent, UserConvergent, Untagged };

struct AsymptoticTag {
  TagKind kind = TagKind::Untagged;
  double degree = 0.0;  // Poly
  int iterates = 0;     // XLogIterates

  static AsymptoticTag affine() { return {TagKind::Affine, 1.0, 0}; }
  static AsymptoticTag poly(double d) { return {TagKind::Poly, d, 0}; }
  static AsymptoticTag x_log_iterates(int k) { return {TagKind::XLogIterates, 1.0, k}; }
  static AsymptoticTag divergent() { return {TagKind::UserDivergent, 0.0, 0}; }
  static AsymptoticTag convergent() { return {TagKind::UserConvergent, 0.0, 0}; }
  static AsymptoticTag untagged() { return {}; }

  /// Whether the tag alone decides divergence of the integral of 1/alpha.
  std::optional<bool> divergent_integral() const {
    switch (kind) {
      case TagKind::Affine:
      case TagKind::XLogIterates:
      case TagKind::UserDivergent: return true;
      case TagKind::Poly: return degree <= 1.0;
      case TagKind::UserConvergent: return false;
      case TagKind::Untagged: return std::nullopt;
    }
    return std::nullopt;
  }

  std::string to_string() const {
    char buf[48];
    switch (kind) {
      case TagKind::Affine: return "affine";
      case TagKind::Poly: std::snprintf(buf, sizeof buf, "poly(%g)", degree); return buf;
      case TagKind::XLogIterates: return "x_log_iterates(" + std::to_string(iterates) + ")";
      case TagKind::UserDivergent: return "user-declared-divergent";
      case TagKind::UserConvergent: return "user-declared-convergent";
      case TagKind::Untagged: return "untagged";
    }
    return "untagged";
  }
};

using RealFn = std::function<double(double)>;

namespace detail {

inline void validate_alpha(const RealFn& alpha, double x_max) {
  constexpr int kGrid = 1000;
  double prev = 0.0;
  for (int i = 0; i <= kGrid; ++i) {
    const double x = x_max * i / kGrid;
    const double a = alpha(x);
    if (!(a > 0.0) || !std::isfinite(a))
      fail(ErrorCode::NonPositiveAlpha, "bounding function is not positive at x = " + std::to_string(x));
    if (i > 0 && a < prev - 1e-12 * std::abs(prev))
      fail(ErrorCode::NotNondecreasing, "bounding function decreases near x = " + std::to_string(x));
    prev = a;
  }
}

inline double simpson(const RealFn& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                      int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

/// Adaptive Simpson quadrature on [a, b].
inline double integrate_adaptive(const RealFn& f, double a, double b, double tol = 1e-10) {
  // Split into pieces so that wide ranges are resolved near the origin.
  double total = 0.0;
  double lo = a;
  double width = std::min(1.0, b - a);
  while (lo < b) {
    const double hi = std::min(b, lo + width);
    const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    total += detail::simpson(f, lo, hi, fa, fm, fb, whole, tol * (hi - lo) / (b - a), 40);
    lo = hi;
    width *= 2.0;
  }
  return total;
}

/// Positive nondecreasing candidate for primary completeness.
class BoundingFunction {
 public:
  BoundingFunction(RealFn alpha, AsymptoticTag tag, double x_max = 1000.0, std::string source = {})
      : alpha_(std::move(alpha)), tag_(tag), x_max_(x_max), source_(std::move(source)) {
    if (!(x_max > 0.0)) fail(ErrorCode::InvalidArgument, "validation range must be positive");
    detail::validate_alpha(alpha_, x_max_);
  }

  /// alpha given as a DSL expression in x1.
  static BoundingFunction from_expression(const std::string& src, AsymptoticTag tag, double x_max = 1000.0) {
    expr::Expression e(src);
    return BoundingFunction(
        [e](double x) {
          expr::Slots s{};
          s[expr::kSlotX1] = x;
          return e(s);
        },
        tag, x_max, src);
  }

  double operator()(double x) const { return alpha_(x); }
  const AsymptoticTag& tag() const { return tag_; }
  double validated_up_to() const { return x_max_; }
  const std::string& source() const { return source_; }
  const RealFn& fn() const { return alpha_; }

 private:
  RealFn alpha_;
  AsymptoticTag tag_;
  double x_max_;
  std::string source_;
};

enum class PrimaryVerdict { PrimarilyComplete, NotPrimarilyComplete, Inconclusive };

inline std::string_view to_string(PrimaryVerdict v) {
  switch (v) {
    case PrimaryVerdict::PrimarilyComplete: return "primarily_complete";
    case PrimaryVerdict::NotPrimarilyComplete: return "not_primarily_complete";
    case PrimaryVerdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct Classification {
  PrimaryVerdict verdict = PrimaryVerdict::Inconclusive;
  double partial_integral = 0.0;  // integral of 1/alpha over [0, X_max]
  double loglog_slope = 0.0;      // on [X_max/10, X_max]
  std::string decided_by;         // "tag" or "slope-fit"
  std::string note;
};

/// Decide whether the integral of 1/alpha over [0, inf) diverges.
inline Classification classify_primarily_complete(const BoundingFunction& alpha, double x_max) {
  constexpr double kSlopeEps = 0.05;
  if (!(x_max >= 100.0)) fail(ErrorCode::InvalidArgument, "X_max must be at least 100");
  detail::validate_alpha(alpha.fn(), x_max);

  Classification c;
  c.partial_integral = integrate_adaptive([&](double x) { return 1.0 / alpha(x); }, 0.0, x_max);
  std::vector<double> xs, ys;
  for (int i = 0; i <= 64; ++i) {
    const double x = x_max / 10.0 * std::pow(10.0, i / 64.0);
    xs.push_back(x);
    ys.push_back(alpha(x));
  }
  c.loglog_slope = detail::loglog_slope(xs, ys);

  if (auto div = alpha.tag().divergent_integral()) {
    c.decided_by = "tag";
    const TagKind k = alpha.tag().kind;
    // One-sided sanity check of the claim against the sampled growth.
    const bool claims_slow = k == TagKind::Affine || (k == TagKind::Poly && alpha.tag().degree <= 1.0);
    const bool claims_fast = k == TagKind::Poly && alpha.tag().degree > 1.0;
    if (claims_slow && c.loglog_slope > 1.0 + kSlopeEps) {
      c.verdict = PrimaryVerdict::Inconclusive;
      c.note = "tag " + alpha.tag().to_string() + " contradicts sampled growth";
      return c;
    }
    if (claims_fast && c.loglog_slope < 1.0 + kSlopeEps) {
      c.verdict = PrimaryVerdict::Inconclusive;
      c.note = "tag " + alpha.tag().to_string() + " contradicts sampled growth";
      return c;
    }
    c.verdict = *div ? PrimaryVerdict::PrimarilyComplete : PrimaryVerdict::NotPrimarilyComplete;
    return c;
  }
  c.decided_by = "slope-fit";
  if (c.loglog_slope <= 1.0 - kSlopeEps)
    c.verdict = PrimaryVerdict::PrimarilyComplete;
  else if (c.loglog_slope >= 1.0 + kSlopeEps)
    c.verdict = PrimaryVerdict::NotPrimarilyComplete;
  else
    c.verdict = PrimaryVerdict::Inconclusive;
  return c;
}

/// alpha = sqrt(e - V0) for a nonincreasing potential profile V0. V0's tag
/// poly(d) means |V0(s)| grows like s^d.
inline BoundingFunction positively_complete_to_primary(RealFn v0, AsymptoticTag v0_tag,
                                                       std::optional<double> e = std::nullopt,
                                                       double x_max = 1000.0) {
  const double v00 = v0(0.0);
  const double energy = e.value_or(v00 + 1.0);
  if (!(energy > v00)) fail(ErrorCode::EnergyTooLow, "energy level must exceed V0(0)");
  AsymptoticTag tag = AsymptoticTag::untagged();
  if (v0_tag.kind == TagKind::Poly) {
    const double half = 0.5 * v0_tag.degree;
    tag = half == 1.0 ? AsymptoticTag::affine() : AsymptoticTag::poly(half);
  }
  return BoundingFunction([v0 = std::move(v0), energy](double s) { return std::sqrt(energy - v0(s)); }, tag, x_max);
}

// ---------------------------------------------------------------------------
// Sampled certificates.

struct RegionSampler {
  std::string description;
  Vec base_point;
  std::function<std::vector<Vec>(std::size_t n)> sample;
};

/// Closed ball: centre, the 2 dim axis boundary points, then seeded uniform
/// interior points.
inline RegionSampler ball_region(Vec center, double radius, std::uint64_t seed = 0x5eed) {
  if (!(radius > 0.0)) fail(ErrorCode::EmptyRegion, "ball radius must be positive");
  char buf[96];
  std::snprintf(buf, sizeof buf, "ball(radius=%g, dim=%d, seed=%llu)", radius, static_cast<int>(center.size()),
                static_cast<unsigned long long>(seed));
  RegionSampler r;
  r.description = buf;
  r.base_point = center;
  r.sample = [center, radius, seed](std::size_t n) {
    std::vector<Vec> pts;
    const auto d = center.size();
    pts.push_back(center);
    for (Eigen::Index i = 0; i < d; ++i)
      for (double s : {1.0, -1.0}) {
        Vec p = center;
        p(i) += s * radius;
        pts.push_back(p);
      }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif;
    while (pts.size() < n) {
      Vec dir(d);
      for (Eigen::Index i = 0; i < d; ++i) dir(i) = gauss(rng);
      const double nrm = dir.norm();
      if (nrm == 0.0) continue;
      const double rad = radius * std::pow(unif(rng), 1.0 / static_cast<double>(d));
      pts.push_back(center + dir * (rad / nrm));
    }
    return pts;
  };
  return r;
}

enum class CertificateKind {
  PrimarilyBounded,
  AtMostLinear,
  AtMostLinearFiniteTimes,
  QuadraticPotentialBound,
  PositivelyCompleteBound,
  ProperMapBound,
};

inline std::string_view to_string(CertificateKind k) {
  switch (k) {
    case CertificateKind::PrimarilyBounded: return "primarily_bounded";
    case CertificateKind::AtMostLinear: return "at_most_linear";
    case CertificateKind::AtMostLinearFiniteTimes: return "at_most_linear_finite_times";
    case CertificateKind::QuadraticPotentialBound: return "quadratic_potential_bound";
    case CertificateKind::PositivelyCompleteBound: return "positively_complete_bound";
    case CertificateKind::ProperMapBound: return "proper_map_bound";
  }
  return "?";
}

struct GrowthCertificate {
  CertificateKind kind = CertificateKind::AtMostLinear;
  std::vector<std::pair<std::string, double>> constants;
  std::string region;
  /// What the abscissa in the bound measures.
  std::string proxy;
  /// Minimum of bound - gauge over the samples.
  double margin = 0.0;
  std::size_t n_samples = 0;

  double constant(std::string_view name) const {
    for (const auto& [k, v] : constants)
      if (k == name) return v;
    fail(ErrorCode::InvalidArgument, "certificate has no constant " + std::string(name));
  }
};

struct FitFailure {
  Vec worst_point;
  double gauge = 0.0;
  double abscissa = 0.0;
  std::string reason;
};

struct FitOutcome {
  std::optional<GrowthCertificate> certificate;
  std::optional<FitFailure> failure;
  bool ok() const { return certificate.has_value(); }
};

struct GaugeSample {
  Vec point;
  double abscissa = 0.0;
  double gauge = 0.0;
};

struct AffineFit {
  double c0 = 0.0;
  double c1 = 0.0;
};

namespace detail {

/// Minimise c0 + c1 * rbar over c0, c1 >= 0 with c0 + c1 r_i >= g_i. A
/// two-variable LP: the optimum sits on an upper-hull edge or on an axis.
inline AffineFit minimax_affine(const std::vector<GaugeSample>& s) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(s.size());
  double rbar = 0.0;
  for (const auto& x : s) {
    pts.emplace_back(x.abscissa, x.gauge);
    rbar += x.abscissa;
  }
  rbar /= static_cast<double>(s.size());
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : pts) {
    if (!hull.empty() && hull.back().first == p.first) {
      if (hull.back().second >= p.second) continue;
      hull.pop_back();
    }
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      const double cross = (b.first - a.first) * (p.second - a.second) - (b.second - a.second) * (p.first - a.first);
      if (cross >= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(p);
  }
  auto feasible = [&](double c0, double c1) {
    if (c0 < 0.0 || c1 < 0.0) return false;
    for (const auto& [r, g] : hull)
      if (c0 + c1 * r < g - 1e-12 * (1.0 + std::abs(g))) return false;
    return true;
  };
  double gmax = 0.0;
  for (const auto& p : hull) gmax = std::max(gmax, p.second);
  AffineFit best{gmax, 0.0};
  double best_obj = gmax;
  auto consider = [&](double c0, double c1) {
    if (!feasible(c0, c1)) return;
    const double obj = c0 + c1 * rbar;
    if (obj < best_obj) {
      best_obj = obj;
      best = {c0, c1};
    }
  };
  for (std::size_t i = 1; i < hull.size(); ++i) {
    const auto [ra, ga] = hull[i - 1];
    const auto [rb, gb] = hull[i];
    const double c1 = (gb - ga) / (rb - ra);
    consider(ga - c1 * ra, c1);
  }
  double c1_axis = 0.0;
  bool axis_ok = true;
  for (const auto& [r, g] : hull) {
    if (g <= 0.0) continue;
    if (r <= 0.0) {
      axis_ok = false;
      break;
    }
    c1_axis = std::max(c1_axis, g / r);
  }
  if (axis_ok) consider(0.0, c1_axis);
  best.c0 = std::max(best.c0, 0.0);
  best.c1 = std::max(best.c1, 0.0);
  return best;
}

/// Log-log growth exponent of per-bin maxima of value over the outer decade
/// of the abscissa range.
inline std::optional<double> outer_decade_slope(const std::vector<GaugeSample>& s,
                                                const std::function<double(const GaugeSample&)>& value) {
  double rmax = 0.0;
  for (const auto& x : s) rmax = std::max(rmax, x.abscissa);
  if (!(rmax > 0.0)) return std::nullopt;
  constexpr int kBins = 10;
  std::vector<double> best(kBins, -1.0), at(kBins, 0.0);
  for (const auto& x : s) {
    if (x.abscissa < rmax / 10.0) continue;
    int b = static_cast<int>(std::floor(kBins * std::log10(x.abscissa / (rmax / 10.0))));
    b = std::clamp(b, 0, kBins - 1);
    const double v = value(x);
    if (v > best[static_cast<std::size_t>(b)]) {
      best[static_cast<std::size_t>(b)] = v;
      at[static_cast<std::size_t>(b)] = x.abscissa;
    }
  }
  std::vector<double> xs, ys;
  for (int b = 0; b < kBins; ++b)
    if (best[static_cast<std::size_t>(b)] > 0.0) {
      xs.push_back(at[static_cast<std::size_t>(b)]);
      ys.push_back(best[static_cast<std::size_t>(b)]);
    }
  if (xs.size() < 3) return std::nullopt;
  return loglog_slope(xs, ys);
}

inline std::vector<GaugeSample> sample_gauge(const std::function<double(const Vec&)>& gauge,
                                             const std::function<double(const Vec&)>& abscissa,
                                             const RegionSampler& region, std::size_t n) {
  if (n < 1000) fail(ErrorCode::InvalidArgument, "at least 1000 samples are required");
  auto pts = region.sample(n);
  if (pts.empty()) fail(ErrorCode::EmptyRegion, "region sampler produced no points");
  std::vector<GaugeSample> out;
  out.reserve(pts.size());
  for (auto& p : pts) {
    const double g = gauge(p);
    if (!std::isfinite(g) || g < 0.0) fail(ErrorCode::InvalidArgument, "gauge must be finite and nonnegative");
    out.push_back({p, abscissa(p), g});
  }
  return out;
}

inline FitOutcome affine_certificate(const std::vector<GaugeSample>& s, CertificateKind kind, std::string region,
                                     std::string proxy, std::string c0_name, std::string c1_name) {
  constexpr double kSlopeEps = 0.05;
  FitOutcome out;
  auto worst = std::max_element(s.begin(), s.end(), [](const GaugeSample& a, const GaugeSample& b) {
    return a.gauge / (1.0 + a.abscissa) < b.gauge / (1.0 + b.abscissa);
  });
  auto slope = outer_decade_slope(s, [](const GaugeSample& x) { return x.gauge; });
  if (slope && *slope > 1.0 + kSlopeEps) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "gauge grows with exponent %.3g > 1 over the outer decade", *slope);
    out.failure = FitFailure{worst->point, worst->gauge, worst->abscissa, buf};
    return out;
  }
  AffineFit fit = minimax_affine(s);
  fit.c0 += 1e-10 * (1.0 + fit.c0);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& x : s) margin = std::min(margin, fit.c0 + fit.c1 * x.abscissa - x.gauge);
  if (!(margin > 0.0)) {
    out.failure = FitFailure{worst->point, worst->gauge, worst->abscissa, "no affine bound with positive slack"};
    return out;
  }
  GrowthCertificate c;
  c.kind = kind;
  c.constants = {{std::move(c0_name), fit.c0}, {std::move(c1_name), fit.c1}};
  c.region = std::move(region);
  c.proxy = std::move(proxy);
  c.margin = margin;
  c.n_samples = s.size();
  out.certificate = std::move(c);
  return out;
}

}  // namespace detail

enum class Family { Affine, AlphaScaled };

/// Sampled bound gauge(p) <= C0 + C1 |p - base| (affine) or
/// gauge(p) <= C alpha(|p - base|) (alpha-scaled).
inline FitOutcome fit_bounding_function(const std::function<double(const Vec&)>& gauge, const RegionSampler& region,
                                        Family family, std::size_t n_samples,
                                        const BoundingFunction* alpha = nullptr) {
  const Vec base = region.base_point;
  auto dist = [base](const Vec& p) { return (p - base).norm(); };
  const auto s = detail::sample_gauge(gauge, dist, region, n_samples);
  if (family == Family::Affine)
    return detail::affine_certificate(s, CertificateKind::AtMostLinear, region.description,
                                      "chart-distance-to-base-point", "C0", "C1");

  if (!alpha) fail(ErrorCode::InvalidArgument, "alpha-scaled family needs a bounding function");
  FitOutcome out;
  auto ratio = [alpha](const GaugeSample& x) { return x.gauge / (*alpha)(x.abscissa); };
  auto worst = std::max_element(s.begin(), s.end(),
                                [&](const GaugeSample& a, const GaugeSample& b) { return ratio(a) < ratio(b); });
  auto slope = detail::outer_decade_slope(s, ratio);
  if (slope && *slope > 0.05) {
    out.failure = FitFailure{worst->point, worst->gauge, worst->abscissa, "gauge outgrows the bounding function"};
    return out;
  }
  double c = ratio(*worst);
  c += 1e-10 * (1.0 + c);
  GrowthCertificate cert;
  cert.kind = CertificateKind::PrimarilyBounded;
  cert.constants = {{"C", c}};
  cert.region = region.description;
  cert.proxy = "chart-distance-to-base-point";
  cert.margin = std::numeric_limits<double>::infinity();
  for (const auto& x : s) cert.margin = std::min(cert.margin, c * (*alpha)(x.abscissa) - x.gauge);
  cert.n_samples = s.size();
  if (!(cert.margin > 0.0)) {
    out.failure = FitFailure{worst->point, worst->gauge, worst->abscissa, "no scaled bound with positive slack"};
    return out;
  }
  out.certificate = std::move(cert);
  return out;
}

/// |X_p(f)| <= C1 |f(p)| + C2 over the sampled region.
inline FitOutcome check_proper_criterion(const std::function<double(const Vec&)>& f,
                                         const std::function<double(const Vec&)>& xf, const RegionSampler& region,
                                         std::size_t n_samples = 1000) {
  const auto s = detail::sample_gauge([&](const Vec& p) { return std::abs(xf(p)); },
                                      [&](const Vec& p) { return std::abs(f(p)); }, region, n_samples);
  auto out = detail::affine_certificate(s, CertificateKind::ProperMapBound, region.description, "abs-f", "C2", "C1");
  if (out.certificate) std::swap(out.certificate->constants[0], out.certificate->constants[1]);
  return out;
}

/// Re-evaluate an affine certificate on the given samples; returns the
/// minimum slack.
inline double affine_slack(double c0, double c1, const std::vector<GaugeSample>& s) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& x : s) m = std::min(m, c0 + c1 * x.abscissa - x.gauge);
  return m;
}

}  // namespace cplab::growth
