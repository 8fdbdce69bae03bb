#pragma once

// Second-order trajectories D(dγ/dt)/dt = E dγ/dt + R - grad V on Riemannian
// charts, the energy identity residual, the a-priori arc-length bound chain,
// sampled hypothesis certificates and Finsler Euler–Lagrange trajectories.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <array>
#include <functional>
#include <limits>
#include <span>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cplab/error.hpp"
#include "cplab/expr.hpp"
#include "cplab/geom.hpp"
#include "cplab/growth.hpp"
#include "cplab/ode.hpp"

namespace cplab::mech {

using MatFn = std::function<Mat(const Vec& x, double t)>;
using VecFn = std::function<Vec(const Vec& x, double t)>;
using ScalarField = std::function<double(const Vec& x, double t)>;

enum class GradSource { Analytic, FiniteDifference };

struct TrajectoryProblem {
  MetricField g;
  MatFn E;       // empty: 0
  VecFn R;       // empty: 0
  ScalarField V; // empty: 0
  ScalarField dV_dt;
  /// Differential dV as a covector; used when grad_source is Analytic.
  VecFn dV;
  GradSource grad_source = GradSource::FiniteDifference;
  /// When dV_dt is empty: true means it is identically 0, false means it is
  /// differenced in t.
  bool autonomous_V = true;

  int dim() const { return g.dim(); }

  double potential(const Vec& x, double t) const { return V ? V(x, t) : 0.0; }

  double potential_rate(const Vec& x, double t) const {
    if (dV_dt) return dV_dt(x, t);
    if (!V || autonomous_V) return 0.0;
    const double h = 1e-3 * (1.0 + std::abs(t));
    return central_d1([&](int s) { return V(x, t + s * h); }) / h;
  }

  Mat endomorphism(const Vec& x, double t) const { return E ? E(x, t) : Mat::Zero(dim(), dim()); }
  Vec force(const Vec& x, double t) const { return R ? R(x, t) : Vec::Zero(dim()); }
};

/// Order-4 central-difference differential of V in the chart.
inline Vec potential_differential_fd(const ScalarField& V, const Vec& x, double t) {
  const double h = fd_step(x, 1e-3);
  Vec d(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    d(i) = central_d1([&](int s) {
             Vec q = x;
             q(i) += s * h;
             return V(q, t);
           }) /
           h;
  }
  return d;
}

inline Vec potential_differential(const TrajectoryProblem& prob, const Vec& x, double t) {
  if (!prob.V) return Vec::Zero(x.size());
  if (prob.grad_source == GradSource::Analytic && prob.dV) return prob.dV(x, t);
  return potential_differential_fd(prob.V, x, t);
}

/// Acceleration -Γ(v, v) + E v + R - g^{-1} dV.
inline Vec trajectory_rhs(const TrajectoryProblem& prob, double t, const Vec& x, const Vec& v) {
  const int n = prob.dim();
  if (x.size() != n || v.size() != n) fail(ErrorCode::BadDimension, "state does not match the chart dimension");
  if (!prob.g.domain().contains(x)) fail(ErrorCode::OutOfDomain, "trajectory point outside the chart domain");
  const Mat g = prob.g.raw(x);
  Eigen::FullPivLU<Mat> lu(g);
  if (!lu.isInvertible()) fail(ErrorCode::DegenerateMetric, "metric is not invertible");
  std::array<double, kMaxDim * kMaxDim * kMaxDim> buf{};
  std::span<double> gamma(buf.data(), static_cast<std::size_t>(n * n * n));
  christoffel_fast(prob.g, x, gamma);
  Vec a = Vec::Zero(n);
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) acc += gamma[static_cast<std::size_t>((k * n + i) * n + j)] * v(i) * v(j);
    a(k) = -acc;
  }
  if (prob.E) a += prob.E(x, t) * v;
  if (prob.R) a += prob.R(x, t);
  if (prob.V) a -= lu.solve(potential_differential(prob, x, t));
  return a;
}

inline double metric_speed_squared(const MetricField& g, const Vec& x, const Vec& v) { return v.dot(g.raw(x) * v); }

/// State (x, v) flow of the trajectory equation, with ledger entries
/// u_metric = g(v, v) and V.
inline ode::FlowSystem trajectory_system(const TrajectoryProblem& prob) {
  const auto n = static_cast<std::size_t>(prob.dim());
  ode::FlowSystem sys;
  sys.state_dim = 2 * n;
  auto split = [n](std::span<const double> s) {
    Vec x(static_cast<Eigen::Index>(n)), v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      x(static_cast<Eigen::Index>(i)) = s[i];
      v(static_cast<Eigen::Index>(i)) = s[n + i];
    }
    return std::pair{x, v};
  };
  sys.rhs = [prob, n, split](double t, std::span<const double> s, std::span<double> ds) {
    auto [x, v] = split(s);
    const Vec a = trajectory_rhs(prob, t, x, v);
    for (std::size_t i = 0; i < n; ++i) {
      ds[i] = s[n + i];
      ds[n + i] = a(static_cast<Eigen::Index>(i));
    }
  };
  const MetricField g = prob.g;
  sys.domain_guard = [g, split](std::span<const double> s) { return g.domain().contains(split(s).first); };
  sys.speed_gauge = [g, split](double, std::span<const double> s) {
    auto [x, v] = split(s);
    return std::sqrt(std::max(0.0, metric_speed_squared(g, x, v)));
  };
  sys.ledger.emplace_back("u_metric", [g, split](double, std::span<const double> s) {
    auto [x, v] = split(s);
    return metric_speed_squared(g, x, v);
  });
  sys.ledger.emplace_back("V", [prob, split](double t, std::span<const double> s) {
    return prob.potential(split(s).first, t);
  });
  return sys;
}

inline Mat self_adjoint_part(const Mat& g, const Mat& E) {
  // g-adjoint of E is g^{-1} E^T g.
  const Mat adj = g.ldlt().solve(E.transpose() * g);
  return 0.5 * (E + adj);
}

/// Operator norm of a g-self-adjoint endomorphism in a g-orthonormal frame.
inline double operator_norm_g(const Mat& g, const Mat& S) {
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success) fail(ErrorCode::DegenerateMetric, "metric is not positive definite");
  const Mat L = llt.matrixL();
  // With g = L L^T, the frame-matrix of S is L^T S L^{-T}.
  const Mat Lt = L.transpose();
  const Mat hat = Lt * S * Lt.inverse();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (hat + hat.transpose()));
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double norm_g(const Mat& g, const Vec& w) { return std::sqrt(std::max(0.0, w.dot(g * w))); }

// ---------------------------------------------------------------------------
// Energy identity.

struct EnergyResidual {
  double max_residual = 0.0;
  double at_time = 0.0;
  std::size_t n_points = 0;
};

/// Max over interior samples of |u'/2 - g(S v, v) - g(R, v) + (d/dt V∘γ - ∂V/∂t)|,
/// with u and V∘γ differentiated numerically from the ledger.
inline EnergyResidual energy_rate_residual(const TrajectoryProblem& prob, const ode::TrajectoryResult& traj) {
  const std::size_t m = traj.times.size();
  if (m < 10) fail(ErrorCode::TooFewSamples, "energy residual needs at least 10 samples");
  const auto n = static_cast<Eigen::Index>(prob.dim());
  if (traj.states.front().size() != static_cast<std::size_t>(2 * n))
    fail(ErrorCode::InvalidArgument, "trajectory state does not match the problem");
  std::vector<double> u(m), vpot(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& s = traj.states[i];
    Vec x = Eigen::Map<const Vec>(s.data(), n), v = Eigen::Map<const Vec>(s.data() + n, n);
    u[i] = metric_speed_squared(prob.g, x, v);
    vpot[i] = prob.potential(x, traj.times[i]);
  }
  const auto du = ode::differentiate(traj.times, u);
  const auto dvp = ode::differentiate(traj.times, vpot);
  EnergyResidual out;
  for (std::size_t i = 2; i + 2 < m; ++i) {
    const auto& s = traj.states[i];
    const double t = traj.times[i];
    Vec x = Eigen::Map<const Vec>(s.data(), n), v = Eigen::Map<const Vec>(s.data() + n, n);
    const Mat g = prob.g.raw(x);
    const Mat S = self_adjoint_part(g, prob.endomorphism(x, t));
    const double r = 0.5 * du[i] - v.dot(g * (S * v)) - prob.force(x, t).dot(g * v) +
                     (dvp[i] - prob.potential_rate(x, t));
    ++out.n_points;
    if (std::abs(r) > out.max_residual) {
      out.max_residual = std::abs(r);
      out.at_time = t;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// The a-priori arc-length bound.

/// Per-hypothesis bounds on [0, b]: ||S|| <= S0, ||R|| <= R0 + R1 |p|,
/// -V and |∂V/∂t| <= P0 + P2 |p|^2, with |p| the distance to the initial
/// point; u0 = g(v0, v0) and V_init = V(x0, 0).
struct ChainInputs {
  double S0 = 0, R0 = 0, R1 = 0, P0 = 0, P2 = 0;
  double b = 0, u0 = 0, V_init = 0;
};

/// One explicit instantiation of the constant chain, with every intermediate
/// kept for audit.
struct BoundChain {
  ChainInputs in;
  // d/dt (u + 2V) <= A0 + A1 u + A2 |γ|^2
  double A0 = 0, A1 = 0, A2 = 0;
  // u < C0' + C1' l^2 + C2' ∫u
  double C0p = 0, C1p = 0, C2p = 0;
  // l' < sqrt(A + B l^2)
  double A = 0, B = 0;

  double l_max(double t) const { return std::sqrt(A / B) * std::sinh(std::sqrt(B) * t); }

  std::vector<std::pair<std::string, double>> audit() const {
    return {{"S0", in.S0}, {"R0", in.R0}, {"R1", in.R1}, {"P0", in.P0}, {"P2", in.P2}, {"b", in.b},
            {"u0", in.u0}, {"V_init", in.V_init}, {"A0", A0}, {"A1", A1}, {"A2", A2}, {"C0'", C0p},
            {"C1'", C1p}, {"C2'", C2p}, {"A", A}, {"B", B}};
  }
};

inline BoundChain bound_chain(ChainInputs in) {
  for (double c : {in.S0, in.R0, in.R1, in.P0, in.P2, in.b})
    if (!(c >= 0.0) || !std::isfinite(c)) fail(ErrorCode::NonPositiveInput, "bound-chain inputs must be positive");
  if (!(in.b > 0.0)) fail(ErrorCode::NonPositiveInput, "time window must be positive");
  if (!(in.u0 >= 0.0) || !std::isfinite(in.V_init)) fail(ErrorCode::NonPositiveInput, "initial speed must be nonnegative");
  constexpr double kFloor = 1e-12;
  for (double* c : {&in.S0, &in.R0, &in.R1, &in.P0, &in.P2}) *c = std::max(*c, kFloor);
  BoundChain c;
  c.in = in;
  const double b = in.b;
  // (2||S|| + w) u + ||R||^2 / w + 2 ∂V/∂t with ||R||^2 <= 2 R0^2 + 2 R1^2 |p|^2.
  // Young weight w = 1, or no cross term at all when R vanishes; this keeps
  // the chain monotone and lets the force-free case collapse to sqrt(u0) t.
  const bool forced = in.R0 > kFloor || in.R1 > kFloor;
  const double w = forced ? 1.0 : 0.0;
  c.A0 = (forced ? 2.0 * in.R0 * in.R0 : 0.0) + 2.0 * in.P0;
  c.A1 = 2.0 * in.S0 + w;
  c.A2 = (forced ? 2.0 * in.R1 * in.R1 : 0.0) + 2.0 * in.P2;
  // Integrate on [0, t], use |γ|^2 <= l^2, ∫ l^2 <= b l^2 and -2V <= 2 P0 + 2 P2 l^2.
  c.C0p = std::max(in.u0 + 2.0 * in.V_init + c.A0 * b + 2.0 * in.P0, kFloor);
  c.C1p = c.A2 * b + 2.0 * in.P2;
  c.C2p = c.A1;
  const double k = 1.0 + c.C2p * b * std::exp(c.C2p * b);
  c.A = c.C0p * k;
  c.B = c.C1p * k;
  return c;
}

/// Single-constant form: C0 bounds ||S|| and the constant terms of the R and
/// V bounds, C1 the slope of ||R||, C2 the quadratic coefficient of -V and
/// |∂V/∂t|.
inline BoundChain bound_chain(double C0, double C1, double C2, double b, double u0 = 0.0, double V_init = 0.0) {
  return bound_chain(ChainInputs{C0, C0, C1, C0, C2, b, u0, V_init});
}

struct BoundCheck {
  bool holds = true;
  bool inside_region = true;
  double min_gap = std::numeric_limits<double>::infinity();
  std::optional<double> first_violation;
};

/// l(t) < l_max(t) at every sample with 0 < t <= b; also reports whether the
/// trajectory stayed in the ball where the hypotheses were sampled.
inline BoundCheck check_bound_on_trajectory(const BoundChain& chain, const ode::TrajectoryResult& traj, double t0 = 0.0,
                                            std::optional<std::pair<Vec, double>> ball = std::nullopt) {
  BoundCheck out;
  const auto& l = traj.series("arc_length");
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i] - t0;
    if (!(t > 0.0) || t > chain.in.b) continue;
    const double gap = chain.l_max(t) - l[i];
    out.min_gap = std::min(out.min_gap, gap);
    if (!(gap > 0.0) && out.holds) {
      out.holds = false;
      out.first_violation = traj.times[i];
    }
    if (ball) {
      const auto& s = traj.states[i];
      const auto n = ball->first.size();
      const Vec x = Eigen::Map<const Vec>(s.data(), n);
      if ((x - ball->first).norm() > ball->second) out.inside_region = false;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hypothesis certificates.

struct HypothesisResult {
  std::string name;
  bool passed = false;
  std::optional<growth::GrowthCertificate> certificate;
  std::optional<growth::FitFailure> failure;
};

/// Optional alternative potential mode: V >= -K0 and |∂V/∂t| <= K1 (V + K0),
/// giving d/dt (u + 2V) <= C (u + 2V - B).
struct AlternativeBound {
  bool passed = false;
  double K0 = 0.0, K1 = 0.0, C_S = 0.0, C_R = 0.0;
  double C = 0.0, B = 0.0;
  std::string note;
};

struct HypothesisReport {
  std::vector<HypothesisResult> hypotheses;  // (i), (ii), (iii)
  std::optional<BoundChain> chain;
  std::optional<std::string> failing;
  std::optional<AlternativeBound> alternative;
  bool all_passed() const { return !failing.has_value(); }
};

struct HypothesisOptions {
  std::size_t n_samples = 2000;
  int time_points = 9;
  bool alternative_mode = false;
  double u0 = 0.0;
  double V0 = 0.0;
};

/// Sample hypotheses (i)-(iii) over the region and [t0, t0 + b].
inline HypothesisReport verify_theorem1_hypotheses(const TrajectoryProblem& prob, const growth::RegionSampler& region,
                                                   double b, const HypothesisOptions& opt = {}, double t0 = 0.0) {
  if (prob.g.signature() != 0) fail(ErrorCode::InvalidArgument, "hypothesis certificates need a Riemannian metric");
  if (!(b > 0.0)) fail(ErrorCode::InvalidArgument, "time window must be positive");
  const int nt = std::max(2, opt.time_points);
  std::vector<double> ts;
  for (int j = 0; j < nt; ++j) ts.push_back(t0 + b * j / (nt - 1));
  const Vec base = region.base_point;
  auto pts = region.sample(opt.n_samples);
  if (pts.empty()) fail(ErrorCode::EmptyRegion, "region sampler produced no points");
  std::vector<Vec> inside;
  for (auto& p : pts)
    if (prob.g.domain().contains(p)) inside.push_back(p);
  if (inside.empty()) fail(ErrorCode::EmptyRegion, "no sampled point lies in the chart domain");

  auto sup_t = [&](const std::function<double(const Vec&, double)>& f) {
    return [&, f](const Vec& p) {
      double m = 0.0;
      for (double t : ts) m = std::max(m, f(p, t));
      return m;
    };
  };
  growth::RegionSampler fixed = region;
  fixed.sample = [inside](std::size_t) { return inside; };
  const std::size_t n = std::max<std::size_t>(inside.size(), 1000);

  HypothesisReport rep;
  // (i) uniform bound on the self-adjoint part.
  {
    HypothesisResult h{"(i)", false, {}, {}};
    double c0 = 0.0;
    Vec worst = inside.front();
    for (const auto& p : inside)
      for (double t : ts) {
        const Mat g = prob.g.raw(p);
        const double s = operator_norm_g(g, self_adjoint_part(g, prob.endomorphism(p, t)));
        if (s > c0) {
          c0 = s;
          worst = p;
        }
      }
    if (std::isfinite(c0)) {
      growth::GrowthCertificate cert;
      cert.kind = growth::CertificateKind::AtMostLinearFiniteTimes;
      const double bound = c0 * (1.0 + 1e-12) + 1e-12;
      cert.constants = {{"C0", bound}, {"C1", 0.0}};
      cert.region = region.description;
      cert.proxy = "chart-distance-to-base-point";
      cert.margin = bound - c0;
      cert.n_samples = inside.size() * ts.size();
      h.certificate = cert;
      h.passed = true;
    } else {
      h.failure = growth::FitFailure{worst, c0, (worst - base).norm(), "self-adjoint part is unbounded"};
    }
    rep.hypotheses.push_back(std::move(h));
  }
  // (ii) at most linear growth of ||R||.
  {
    HypothesisResult h{"(ii)", false, {}, {}};
    auto gauge = sup_t([&](const Vec& p, double t) { return norm_g(prob.g.raw(p), prob.force(p, t)); });
    auto out = growth::fit_bounding_function(gauge, fixed, growth::Family::Affine, n);
    if (out.certificate) out.certificate->kind = growth::CertificateKind::AtMostLinearFiniteTimes;
    h.passed = out.ok();
    h.certificate = out.certificate;
    h.failure = out.failure;
    rep.hypotheses.push_back(std::move(h));
  }
  // (iii) -V and |∂V/∂t| at most quadratic.
  {
    HypothesisResult h{"(iii)", false, {}, {}};
    auto gauge = sup_t([&](const Vec& p, double t) {
      return std::max({0.0, -prob.potential(p, t), std::abs(prob.potential_rate(p, t))});
    });
    auto sq = [base](const Vec& p) { return (p - base).squaredNorm(); };
    const auto s = growth::detail::sample_gauge(gauge, sq, fixed, n);
    auto out = growth::detail::affine_certificate(s, growth::CertificateKind::QuadraticPotentialBound,
                                                  region.description, "squared-chart-distance-to-base-point", "C0",
                                                  "C2");
    h.passed = out.ok();
    h.certificate = out.certificate;
    h.failure = out.failure;
    rep.hypotheses.push_back(std::move(h));
  }
  for (const auto& h : rep.hypotheses)
    if (!h.passed) {
      rep.failing = h.name;
      break;
    }
  if (!rep.failing) {
    const auto& c = rep.hypotheses;
    rep.chain = bound_chain(ChainInputs{c[0].certificate->constant("C0"), c[1].certificate->constant("C0"),
                                        c[1].certificate->constant("C1"), c[2].certificate->constant("C0"),
                                        c[2].certificate->constant("C2"), b, opt.u0, opt.V0});
  }

  if (opt.alternative_mode) {
    AlternativeBound alt;
    double vmin = std::numeric_limits<double>::infinity(), cs = 0.0, cr = 0.0;
    for (const auto& p : inside)
      for (double t : ts) {
        vmin = std::min(vmin, prob.potential(p, t));
        const Mat g = prob.g.raw(p);
        cs = std::max(cs, operator_norm_g(g, self_adjoint_part(g, prob.endomorphism(p, t))));
        cr = std::max(cr, norm_g(g, prob.force(p, t)));
      }
    alt.K0 = std::max(0.0, -vmin) * (1.0 + 1e-9) + 1e-9;
    double k1 = 0.0;
    for (const auto& p : inside)
      for (double t : ts) k1 = std::max(k1, std::abs(prob.potential_rate(p, t)) / (prob.potential(p, t) + alt.K0));
    alt.K1 = k1 * (1.0 + 1e-9) + 1e-12;
    alt.C_S = cs;
    alt.C_R = cr;
    alt.C = std::max(2.0 * cs + (cr > 0.0 ? 1.0 : 0.0), alt.K1);
    alt.B = -2.0 * alt.K0 - (cr > 0.0 ? cr * cr / alt.C : 0.0);
    alt.passed = std::isfinite(alt.K1) && std::isfinite(alt.C);
    if (!alt.passed) alt.note = "no finite rate constant on the sampled region";
    rep.alternative = alt;
  }
  return rep;
}

/// Gronwall form of the alternative bound on a trajectory:
/// u + 2V - B <= (u0 + 2V0 - B) e^{C (t - t0)}. Returns the largest excess.
inline double alternative_bound_excess(const AlternativeBound& alt, const ode::TrajectoryResult& traj) {
  const auto& u = traj.series("u_metric");
  const auto& V = traj.series("V");
  const double t0 = traj.times.front();
  const double w0 = u[0] + 2.0 * V[0] - alt.B;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double w = u[i] + 2.0 * V[i] - alt.B;
    const double bound = w0 * std::exp(alt.C * (traj.times[i] - t0));
    worst = std::max(worst, w - bound - 1e-9 * (1.0 + std::abs(bound)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Finsler trajectories.

using FinslerFn = std::function<double(const Vec& x, const Vec& v)>;

class FinslerMetricField {
 public:
  FinslerMetricField(std::string name, ChartDomain domain, FinslerFn F, bool reversible = true)
      : name_(std::move(name)), domain_(std::move(domain)), F_(std::move(F)) {
    if (!reversible) fail(ErrorCode::InvalidArgument, "only reversible Finsler metrics are supported");
  }

  const std::string& name() const { return name_; }
  const ChartDomain& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  double operator()(const Vec& x, const Vec& v) const { return F_(domain_.reduce(x), v); }

 private:
  std::string name_;
  ChartDomain domain_;
  FinslerFn F_;
};

inline FinslerMetricField finsler_from_metric(const MetricField& g) {
  if (g.signature() != 0) fail(ErrorCode::InvalidArgument, "Finsler metric from a non-Riemannian metric");
  return FinslerMetricField(g.name() + "-finsler", g.domain(),
                            [g](const Vec& x, const Vec& v) { return std::sqrt(std::max(0.0, v.dot(g.raw(x) * v))); });
}

struct FinslerInvariants {
  double homogeneity = 0.0;    // max relative |F(λv) - λF(v)|
  double reversibility = 0.0;  // relative |F(v) - F(-v)|
};

inline FinslerInvariants check_finsler_invariants(const FinslerMetricField& F, const Vec& x, const Vec& v) {
  FinslerInvariants out;
  const double f = F(x, v);
  for (double lam : {0.5, 2.0, 7.0}) out.homogeneity = std::max(out.homogeneity, std::abs(F(x, lam * v) - lam * f) / (lam * f));
  out.reversibility = std::abs(F(x, -v) - f) / f;
  return out;
}

struct FundamentalTensor {
  Mat h;
  double min_eigenvalue = 0.0;
};

namespace detail {

/// Order-4 Hessian of f at z with step h.
inline Mat hessian(const std::function<double(const Vec&)>& f, const Vec& z, double h) {
  const auto n = z.size();
  Mat H(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) {
      Vec q = z;
      q(a) += (i - 2) * h;
      acc += kD2[static_cast<std::size_t>(i)] * f(q);
    }
    H(a, a) = acc / (h * h);
    for (Eigen::Index b = 0; b < a; ++b) {
      const double m = central_d1([&](int i) {
        return central_d1([&](int j) {
          Vec q = z;
          q(a) += i * h;
          q(b) += j * h;
          return f(q);
        });
      });
      H(a, b) = H(b, a) = m / (h * h);
    }
  }
  return H;
}

}  // namespace detail

/// Hessian in v of F^2/2; raises NotStronglyConvex when the smallest
/// eigenvalue falls below 1e-8 trace/dim.
inline FundamentalTensor fundamental_tensor(const FinslerMetricField& F, const Vec& x, const Vec& v) {
  const double nv = v.norm();
  if (!(nv > 0.0)) fail(ErrorCode::ZeroVector, "fundamental tensor needs a nonzero vector");
  auto half_sq = [&](const Vec& w) {
    const double f = F(x, w);
    return 0.5 * f * f;
  };
  FundamentalTensor out;
  out.h = detail::hessian(half_sq, v, 1e-3 * nv);
  out.h = 0.5 * (out.h + out.h.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(out.h);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  const double n = static_cast<double>(v.size());
  if (!(out.min_eigenvalue > 1e-8 * out.h.trace() / n))
    fail(ErrorCode::NotStronglyConvex, "fundamental tensor is not positive definite enough");
  return out;
}

/// Euler–Lagrange acceleration for L = F^2/2 - V:
/// h_v a = ∂_x L - (∂^2 L / ∂v ∂x) v - ∂^2 L / ∂v ∂t.
inline Vec finsler_trajectory_rhs(const FinslerMetricField& F, const ScalarField& V, double t, const Vec& x,
                                  const Vec& v) {
  const auto n = x.size();
  if (v.size() != n || n != F.dim()) fail(ErrorCode::BadDimension, "state does not match the chart dimension");
  const FundamentalTensor ft = fundamental_tensor(F, x, v);
  const double hv = 1e-3 * v.norm();
  const double hx = fd_step(x, 1e-3);
  auto L2 = [&](const Vec& xx, const Vec& vv) {
    const double f = F(xx, vv);
    return 0.5 * f * f;
  };
  Vec rhs(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    rhs(j) = central_d1([&](int s) {
               Vec q = x;
               q(j) += s * hx;
               return L2(q, v);
             }) /
             hx;
  }
  if (V) rhs -= potential_differential_fd(V, x, t);
  // Mixed partials M_ij = ∂^2 (F^2/2) / ∂v_i ∂x_j; the potential does not
  // depend on v and the metric not on t, so ∂^2 L / ∂v ∂t vanishes.
  Mat M(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double acc = central_d1([&](int a) {
        return central_d1([&](int b) {
          Vec vv = v, xx = x;
          vv(i) += a * hv;
          xx(j) += b * hx;
          return L2(xx, vv);
        });
      });
      M(i, j) = acc / (hv * hx);
    }
  rhs -= M * v;
  return ft.h.fullPivLu().solve(rhs);
}

inline ode::FlowSystem finsler_system(const FinslerMetricField& F, ScalarField V = {}) {
  const auto n = static_cast<std::size_t>(F.dim());
  ode::FlowSystem sys;
  sys.state_dim = 2 * n;
  auto split = [n](std::span<const double> s) {
    Vec x(static_cast<Eigen::Index>(n)), v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      x(static_cast<Eigen::Index>(i)) = s[i];
      v(static_cast<Eigen::Index>(i)) = s[n + i];
    }
    return std::pair{x, v};
  };
  sys.rhs = [F, V, n, split](double t, std::span<const double> s, std::span<double> ds) {
    auto [x, v] = split(s);
    const Vec a = finsler_trajectory_rhs(F, V, t, x, v);
    for (std::size_t i = 0; i < n; ++i) {
      ds[i] = s[n + i];
      ds[n + i] = a(static_cast<Eigen::Index>(i));
    }
  };
  sys.domain_guard = [F, split](std::span<const double> s) { return F.domain().contains(split(s).first); };
  sys.speed_gauge = [F, split](double, std::span<const double> s) {
    auto [x, v] = split(s);
    return F(x, v);
  };
  sys.ledger.emplace_back("F", [F, split](double, std::span<const double> s) {
    auto [x, v] = split(s);
    return F(x, v);
  });
  return sys;
}

// ---------------------------------------------------------------------------
// Problems from DSL expressions.

struct ProblemExpressions {
  std::vector<std::vector<std::string>> E;  // empty: absent
  std::vector<std::string> R;
  std::string V;
  std::string dV_dt;
};

inline TrajectoryProblem problem_from_expressions(const MetricField& g, const ProblemExpressions& src,
                                                  const expr::FunctionTable& functions = {}) {
  TrajectoryProblem prob;
  prob.g = g;
  const auto n = static_cast<std::size_t>(g.dim());
  const ChartDomain dom = g.domain();
  if (!src.E.empty()) {
    if (src.E.size() != n) fail(ErrorCode::BadDimension, "E must have one row per coordinate");
    std::vector<std::vector<expr::Expression>> E;
    for (const auto& row : src.E) {
      if (row.size() != n) fail(ErrorCode::BadDimension, "E must be square");
      std::vector<expr::Expression> r;
      for (const auto& s : row) r.emplace_back(s, functions);
      E.push_back(std::move(r));
    }
    prob.E = [E, dom, n](const Vec& x, double t) {
      const auto s = dom.slots_for(x, t);
      Mat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = E[i][j](s);
      return m;
    };
  }
  if (!src.R.empty()) {
    if (src.R.size() != n) fail(ErrorCode::BadDimension, "R must have one component per coordinate");
    std::vector<expr::Expression> R;
    for (const auto& s : src.R) R.emplace_back(s, functions);
    prob.R = [R, dom, n](const Vec& x, double t) {
      const auto s = dom.slots_for(x, t);
      Vec r(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) r(static_cast<Eigen::Index>(i)) = R[i](s);
      return r;
    };
  }
  if (!src.V.empty()) {
    expr::Expression V(src.V, functions);
    prob.autonomous_V = !V.compiled().uses_slot(expr::kSlotT);
    prob.V = [V, dom](const Vec& x, double t) { return V(dom.slots_for(x, t)); };
  }
  if (!src.dV_dt.empty()) {
    expr::Expression D(src.dV_dt, functions);
    prob.dV_dt = [D, dom](const Vec& x, double t) { return D(dom.slots_for(x, t)); };
  }
  return prob;
}

}  // namespace cplab::mech
