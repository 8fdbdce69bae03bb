#pragma once

// pp-wave and plane-wave metrics, Lorentzian geodesic flows, the reduction of
// pp-wave geodesics to transverse trajectories, Killing conservation and the
// curvature condition on complements of a distinguished vector field.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cplab/error.hpp"
#include "cplab/expr.hpp"
#include "cplab/geom.hpp"
#include "cplab/mechanics.hpp"
#include "cplab/ode.hpp"

namespace cplab::waves {

/// g = -2 du dv + H(u, x) du^2 + g0(x) in coordinates (u, v, x1, ...).
struct PpWaveSpec {
  int n = 4;
  expr::Expression H;
  /// Riemannian metric on the transverse block; empty means Euclidean.
  std::optional<MetricField> transverse;
};

/// Quadratic profile either as a symmetric matrix of expressions in u or as
/// the 4D polarization triple (a, b, c).
struct PlaneWaveProfile {
  std::vector<std::vector<std::string>> A;
  std::optional<std::array<std::string, 3>> abc;

  static PlaneWaveProfile polarization(std::string a, std::string b, std::string c) {
    PlaneWaveProfile p;
    p.abc = std::array<std::string, 3>{std::move(a), std::move(b), std::move(c)};
    return p;
  }
  static PlaneWaveProfile matrix(std::vector<std::vector<std::string>> A) {
    PlaneWaveProfile p;
    p.A = std::move(A);
    return p;
  }

  int transverse_dim() const { return abc ? 2 : static_cast<int>(A.size()); }

  /// Profile functions a(u), b(u), c(u) for the 4D form.
  expr::FunctionTable functions() const {
    expr::FunctionTable ft;
    if (abc) {
      const char* names[3] = {"a", "b", "c"};
      for (int i = 0; i < 3; ++i) ft[names[i]] = expr::UserFunction{{"u"}, expr::parse((*abc)[static_cast<std::size_t>(i)])};
    }
    return ft;
  }

  /// H as DSL source over u, x1, x2, ...
  std::string H_source() const {
    if (abc) return "a(u)*(x1^2-x2^2)+2*b(u)*x1*x2+c(u)*(x1^2+x2^2)";
    const std::size_t m = A.size();
    for (const auto& row : A)
      if (row.size() != m) fail(ErrorCode::BadDimension, "profile matrix must be square");
    std::string s;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (!s.empty()) s += "+";
        s += "(" + A[i][j] + ")*x" + std::to_string(i + 1) + "*x" + std::to_string(j + 1);
      }
    return s.empty() ? "0" : s;
  }

  /// Symmetric matrix A(u) evaluated numerically.
  Mat matrix_at(double u) const {
    const int m = transverse_dim();
    Mat out(m, m);
    expr::Slots s{};
    s[expr::kSlotU] = u;
    if (abc) {
      const auto ft = functions();
      const expr::Expression a("a(u)", ft), b("b(u)", ft), c("c(u)", ft);
      out << a(s) + c(s), b(s), b(s), c(s) - a(s);
      return out;
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        out(i, j) = expr::Expression(A[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])(s);
    return out;
  }
};

inline PpWaveSpec plane_wave_spec(const PlaneWaveProfile& p) {
  if (!p.abc) {
    for (std::size_t i = 0; i < p.A.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (expr::parse(p.A[i][j]) != expr::parse(p.A[j][i]))
          fail(ErrorCode::InvalidArgument, "plane-wave profile matrix must be symmetric");
  }
  PpWaveSpec spec;
  spec.n = p.transverse_dim() + 2;
  spec.H = expr::Expression(p.H_source(), p.functions());
  return spec;
}

inline ChartDomain ppwave_domain(int n) {
  if (n < 3 || n > kMaxDim) fail(ErrorCode::BadDimension, "pp-wave dimension must be in [3, 8]");
  std::vector<std::size_t> slots{expr::kSlotU, expr::kSlotV};
  for (int i = 0; i < n - 2; ++i) slots.push_back(expr::kSlotX1 + static_cast<std::size_t>(i));
  return ChartDomain(n, {}, {}, slots);
}

inline MetricField build_ppwave(const PpWaveSpec& spec) {
  const ChartDomain dom = ppwave_domain(spec.n);
  if (spec.transverse && (spec.transverse->dim() != spec.n - 2 || spec.transverse->signature() != 0))
    fail(ErrorCode::BadDimension, "transverse metric must be Riemannian of dimension n - 2");
  const expr::Expression H = spec.H;
  const auto g0 = spec.transverse;
  return MetricField(
      "pp-wave", dom, 1,
      [H, g0, dom](const Vec& p, Mat& g) {
        const int n = dom.dim();
        g = Mat::Zero(n, n);
        g(0, 0) = H(dom.slots_for(p));
        g(0, 1) = g(1, 0) = -1.0;
        if (g0)
          g.bottomRightCorner(n - 2, n - 2) = g0->raw(p.tail(n - 2));
        else
          g.bottomRightCorner(n - 2, n - 2).setIdentity();
      },
      Smoothness::AnalyticExpression);
}

// ---------------------------------------------------------------------------
// Geodesic flow.

namespace detail {

inline std::pair<Vec, Vec> split(std::span<const double> s, std::size_t n) {
  Vec x(static_cast<Eigen::Index>(n)), v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i)) = s[i];
    v(static_cast<Eigen::Index>(i)) = s[n + i];
  }
  return {x, v};
}

}  // namespace detail

/// Geodesic equation on TM for any signature; the speed gauge is the chart
/// norm of the velocity and the ledger records u_metric = g(v, v).
inline ode::FlowSystem geodesic_system(const MetricField& g) {
  const auto n = static_cast<std::size_t>(g.dim());
  ode::FlowSystem sys;
  sys.state_dim = 2 * n;
  sys.rhs = [g, n](double, std::span<const double> s, std::span<double> ds) {
    auto [x, v] = detail::split(s, n);
    std::array<double, kMaxDim * kMaxDim * kMaxDim> buf{};
    std::span<double> gamma(buf.data(), n * n * n);
    christoffel_fast(g, x, gamma);
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) acc += gamma[(k * n + i) * n + j] * s[n + i] * s[n + j];
      ds[k] = s[n + k];
      ds[n + k] = -acc;
    }
  };
  sys.domain_guard = [g, n](std::span<const double> s) { return g.domain().contains(detail::split(s, n).first); };
  sys.speed_gauge = [n](double, std::span<const double> s) {
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) q += s[n + i] * s[n + i];
    return std::sqrt(q);
  };
  sys.ledger.emplace_back("u_metric", [g, n](double, std::span<const double> s) {
    auto [x, v] = detail::split(s, n);
    return v.dot(g.raw(x) * v);
  });
  return sys;
}

/// Transverse trajectory problem with V = -H/2, parameterised so that the
/// trajectory time t corresponds to u = u0 + udot t along a geodesic with
/// constant du/dt = udot.
inline mech::TrajectoryProblem reduced_problem(const PpWaveSpec& spec, double u0 = 0.0, double udot = 1.0) {
  mech::TrajectoryProblem prob;
  const int m = spec.n - 2;
  prob.g = spec.transverse ? *spec.transverse : euclidean_metric(m);
  const expr::Expression H = spec.H;
  prob.V = [H, u0, udot](const Vec& x, double t) {
    expr::Slots s{};
    s[expr::kSlotU] = u0 + udot * t;
    for (Eigen::Index i = 0; i < x.size(); ++i) s[expr::kSlotX1 + static_cast<std::size_t>(i)] = x(i);
    return -0.5 * udot * udot * H(s);
  };
  prob.autonomous_V = !H.compiled().uses_slot(expr::kSlotU);
  return prob;
}

struct ReductionReport {
  double max_residual = 0.0;
  double udot_drift = 0.0;
  std::size_t n_points = 0;
};

/// Residual of x''(u) + Γ0(x', x') - (1/2) g0^{-1} ∂_x H = 0 along a pp-wave
/// geodesic, with derivatives in u taken numerically from the samples and the
/// result scaled by udot^2.
inline ReductionReport geodesic_riemannian_reduction_check(const PpWaveSpec& spec, const ode::TrajectoryResult& geo) {
  const auto n = static_cast<std::size_t>(spec.n);
  const std::size_t m = geo.times.size();
  if (m < 10) fail(ErrorCode::TooFewSamples, "reduction check needs at least 10 samples");
  if (geo.states.front().size() != 2 * n) fail(ErrorCode::InvalidArgument, "geodesic state does not match the spec");
  const double udot0 = geo.states.front()[n];
  if (std::abs(udot0) < 1e-12) fail(ErrorCode::LightlikeUOrbit, "du/dt vanishes; the reduction does not apply");

  ReductionReport rep;
  std::vector<double> u(m);
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = geo.states[i][0];
    rep.udot_drift = std::max(rep.udot_drift, std::abs(geo.states[i][n] - udot0));
  }
  const std::size_t k = n - 2;
  const MetricField g0 = spec.transverse ? *spec.transverse : euclidean_metric(static_cast<int>(k));
  std::vector<std::vector<double>> xpp(k), xp(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> xj(m);
    for (std::size_t i = 0; i < m; ++i) xj[i] = geo.states[i][2 + j];
    xp[j] = ode::differentiate(u, xj, 1);
    xpp[j] = ode::differentiate(u, xj, 2);
  }
  const auto ks = static_cast<Eigen::Index>(k);
  for (std::size_t i = 2; i + 2 < m; ++i) {
    Vec x(ks), dx(ks);
    for (std::size_t j = 0; j < k; ++j) {
      x(static_cast<Eigen::Index>(j)) = geo.states[i][2 + j];
      dx(static_cast<Eigen::Index>(j)) = xp[j][i];
    }
    // dH/dx by order-4 differences.
    const double h = fd_step(x, 1e-3);
    Vec dH(ks);
    for (Eigen::Index a = 0; a < ks; ++a) {
      dH(a) = central_d1([&](int s) {
                expr::Slots sl{};
                sl[expr::kSlotU] = u[i];
                for (Eigen::Index b = 0; b < ks; ++b) sl[expr::kSlotX1 + static_cast<std::size_t>(b)] = x(b);
                sl[expr::kSlotX1 + static_cast<std::size_t>(a)] += s * h;
                return spec.H(sl);
              }) /
              h;
    }
    const Mat G0 = g0.raw(x);
    Vec acc = G0.ldlt().solve(0.5 * dH);
    std::vector<double> gamma(k * k * k, 0.0);
    if (spec.transverse) christoffel_fast(g0, x, gamma);
    for (std::size_t a = 0; a < k; ++a) {
      double q = 0.0;
      for (std::size_t b = 0; b < k; ++b)
        for (std::size_t c = 0; c < k; ++c)
          q += gamma[(a * k + b) * k + c] * dx(static_cast<Eigen::Index>(b)) * dx(static_cast<Eigen::Index>(c));
      const double r = xpp[a][i] + q - acc(static_cast<Eigen::Index>(a));
      rep.max_residual = std::max(rep.max_residual, udot0 * udot0 * std::abs(r));
    }
    ++rep.n_points;
  }
  return rep;
}

struct ReducedRun {
  ode::TrajectoryResult trajectory;
  std::optional<ode::EscapeEstimate> escape;
  bool blew_up() const {
    return trajectory.termination == ode::Termination::SpeedOverflow ||
           trajectory.termination == ode::Termination::StepCollapse;
  }
};

/// Integrates the transverse trajectory that a pp-wave geodesic with state
/// s0 = (u, v, x, u', v', x') at time t0 reduces to, over the same affine
/// window [t0, t0 + horizon]. Escape times are comparable with the geodesic's.
inline ReducedRun run_reduced(const PpWaveSpec& spec, std::span<const double> s0, double t0, double horizon,
                              ode::IntegrateOptions opt = {}) {
  const auto n = static_cast<std::size_t>(spec.n);
  if (s0.size() != 2 * n) fail(ErrorCode::InvalidArgument, "geodesic state does not match the spec");
  const double udot = s0[n];
  if (std::abs(udot) < 1e-12) fail(ErrorCode::LightlikeUOrbit, "du/dt vanishes; the reduction does not apply");
  // V is written in the trajectory's own time, which starts at 0.
  const auto prob = reduced_problem(spec, s0[0], udot);
  ode::State r0;
  for (std::size_t i = 2; i < n; ++i) r0.push_back(s0[i]);
  for (std::size_t i = 2; i < n; ++i) r0.push_back(s0[n + i]);
  const auto sys = mech::trajectory_system(prob);
  ReducedRun out{ode::integrate(sys, 0.0, r0, horizon, opt), std::nullopt};
  if (out.blew_up()) {
    try {
      out.escape = ode::estimate_escape_time(sys, 0.0, r0, opt.rel_tol, horizon, opt);
      out.escape->time += t0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotIncomplete) throw;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conservation and curvature structure.

using VectorField = std::function<Vec(const Vec& p)>;

/// Max |g(γ', K) - g(γ', K)(0)| over the samples of a geodesic.
inline double killing_conservation(const MetricField& g, const VectorField& K, const ode::TrajectoryResult& traj) {
  if (traj.times.size() < 2) fail(ErrorCode::TooFewSamples, "Killing check needs at least 2 samples");
  const auto n = static_cast<std::size_t>(g.dim());
  double first = 0.0, drift = 0.0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    auto [x, v] = detail::split(traj.states[i], n);
    const double val = v.dot(g.raw(x) * K(x));
    if (i == 0)
      first = val;
    else
      drift = std::max(drift, std::abs(val - first));
  }
  return drift;
}

struct CurvatureConditionPoint {
  Vec point;
  double max_abs = 0.0;
  double error_estimate = 0.0;
  int basis_size = 0;
  bool field_lightlike = false;
  /// max |∇V| component, for information.
  double parallel_defect = 0.0;
};

struct CurvatureConditionReport {
  double max_abs = 0.0;
  double max_error_estimate = 0.0;
  std::vector<CurvatureConditionPoint> points;
  /// max |R(U, W)| below ten times its finite-difference error estimate.
  bool passes() const { return max_abs < 10.0 * max_error_estimate + 1e-12; }
};

/// Basis of the g-orthogonal complement of V at p, starting with V itself when
/// V is lightlike.
inline std::vector<Vec> orthogonal_complement_basis(const Mat& g, const Vec& V, bool lightlike) {
  const auto n = V.size();
  const Vec gV = g * V;
  std::vector<Vec> basis;
  auto try_add = [&](Vec w) {
    for (const auto& b : basis) w -= b.dot(w) * b;
    const double nw = w.norm();
    if (nw > 1e-8) basis.push_back(w / nw);
  };
  if (lightlike) try_add(V);
  for (Eigen::Index i = 0; i < n && static_cast<Eigen::Index>(basis.size()) < n - 1; ++i) {
    Vec e = Vec::Zero(n);
    e(i) = 1.0;
    try_add(e - (gV.dot(e) / gV.squaredNorm()) * gV);
  }
  return basis;
}

inline CurvatureConditionReport check_pp_curvature_condition(const MetricField& g, const VectorField& V,
                                                             const std::vector<Vec>& points,
                                                             const FdOptions& opt = {}) {
  CurvatureConditionReport rep;
  const int n = g.dim();
  for (const auto& p : points) {
    const Vec Vp = V(p);
    if (!(Vp.norm() > 1e-14)) fail(ErrorCode::ZeroV, "distinguished vector field vanishes at a sample point");
    CurvatureConditionPoint cp;
    cp.point = p;
    const Mat gp = metric_at(g, p);
    cp.field_lightlike = causal_character(g, p, Vp) == CausalCharacter::Lightlike;
    const auto basis = orthogonal_complement_basis(gp, Vp, cp.field_lightlike);
    cp.basis_size = static_cast<int>(basis.size());
    const TensorSample R = curvature_tensor(g, p, opt);
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = 0; j < basis.size(); ++j) {
        const Vec& U = basis[i];
        const Vec& W = basis[j];
        const double scale = U.lpNorm<1>() * W.lpNorm<1>();
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            double acc = 0.0;
            for (int c = 0; c < n; ++c)
              for (int d = 0; d < n; ++d) acc += R(a, b, c, d) * U(c) * W(d);
            cp.max_abs = std::max(cp.max_abs, std::abs(acc));
          }
        cp.error_estimate = std::max(cp.error_estimate, R.estimated_fd_error * scale);
      }
    // ∇_b V^a = ∂_b V^a + Γ^a_bc V^c.
    const double h = fd_step(p, 1e-4);
    const auto gamma = christoffel_fast(g, p);
    for (int b = 0; b < n; ++b) {
      const Vec dV = central_d1([&](int s) {
                       Vec q = p;
                       q(b) += s * h;
                       return V(q);
                     }) /
                     h;
      for (int a = 0; a < n; ++a) {
        double cov = dV(a);
        for (int c = 0; c < n; ++c) cov += gamma[static_cast<std::size_t>((a * n + b) * n + c)] * Vp(c);
        cp.parallel_defect = std::max(cp.parallel_defect, std::abs(cov));
      }
    }
    rep.max_abs = std::max(rep.max_abs, cp.max_abs);
    rep.max_error_estimate = std::max(rep.max_error_estimate, cp.error_estimate);
    rep.points.push_back(std::move(cp));
  }
  return rep;
}

}  // namespace cplab::waves
