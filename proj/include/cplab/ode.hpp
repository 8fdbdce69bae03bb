#pragma once

// Adaptive Dormand–Prince 5(4) integration with dense output, domain-exit
// bisection, blow-up diagnosis and escape-time extrapolation. Also the scalar
// comparison-ODE oracle and the autonomous lift of time-dependent fields.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cplab/error.hpp"

namespace cplab::ode {

using State = std::vector<double>;
using RhsFn = std::function<void(double t, std::span<const double> s, std::span<double> ds)>;
using GuardFn = std::function<bool(std::span<const double> s)>;
using ScalarFn = std::function<double(double t, std::span<const double> s)>;

struct FlowSystem {
  std::size_t state_dim = 0;
  RhsFn rhs;
  /// Empty means the whole space.
  GuardFn domain_guard;
  /// Empty means the Euclidean norm of the right-hand side.
  ScalarFn speed_gauge;
  /// Extra named quantities recorded at every sample.
  std::vector<std::pair<std::string, ScalarFn>> ledger;
  /// Optional stop predicate evaluated at accepted states.
  std::function<bool(double t, std::span<const double> s)> stop;
};

enum class Termination { HorizonReached, ExitedDomain, StepCollapse, SpeedOverflow, UserEvent };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::HorizonReached: return "horizon_reached";
    case Termination::ExitedDomain: return "exited_domain";
    case Termination::StepCollapse: return "step_collapse";
    case Termination::SpeedOverflow: return "speed_overflow";
    case Termination::UserEvent: return "user_event";
  }
  return "?";
}

struct EscapeEstimate {
  double time = 0.0;
  double uncertainty = 0.0;
};

struct LedgerSeries {
  std::string name;
  std::vector<double> values;
};

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<State> states;
  Termination termination = Termination::HorizonReached;
  std::optional<EscapeEstimate> escape_estimate;
  /// "arc_length" first, then the system's own entries.
  std::vector<LedgerSeries> ledger;
  double final_time = 0.0;
  double last_step = 0.0;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::string note;

  const std::vector<double>& series(std::string_view name) const {
    for (const auto& l : ledger)
      if (l.name == name) return l.values;
    fail(ErrorCode::InvalidArgument, "no ledger entry named " + std::string(name));
  }
  std::vector<double> component(std::size_t i) const {
    std::vector<double> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(s[i]);
    return out;
  }
};

struct IntegrateOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  /// 0 records every accepted step; otherwise a uniform grid from t0.
  double sample_dt = 0.0;
  /// Explicit output times (overrides sample_dt).
  std::vector<double> sample_times;
  double max_step = std::numeric_limits<double>::infinity();
  double speed_limit = 1e12;
  std::size_t max_steps = 2'000'000;
};

namespace detail {

// Dormand–Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                        d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                        d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// The user system augmented with an arc-length component.
struct Augmented {
  const FlowSystem& sys;
  std::size_t d;
  // set when the last failed eval produced a non-finite value (or an
  // evaluation error) from a finite state
  mutable bool nonfinite = false;

  double gauge(double t, std::span<const double> y, std::span<const double> dy) const {
    if (sys.speed_gauge) return sys.speed_gauge(t, y.first(d));
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += dy[i] * dy[i];
    return std::sqrt(s);
  }

  // Returns false on a non-finite result or a thrown evaluation error.
  bool eval(double t, std::span<const double> y, std::span<double> dy, bool propagate = false) const {
    nonfinite = false;
    try {
      sys.rhs(t, y.first(d), dy.first(d));
      dy[d] = gauge(t, y, dy);
    } catch (const Error& e) {
      if (propagate) throw;
      // the expression layer raises instead of returning NaN
      nonfinite = e.code() == ErrorCode::EvalError && all_finite(y);
      return false;
    }
    if (all_finite(dy)) return true;
    nonfinite = all_finite(y);
    return false;
  }
};

/// Blow-up time through three samples of a gauge behaving like
/// C (t* - t)^(-k): solves log((t*-a)/(t*-b)) / log((t*-b)/(t*-c)) = r, with
/// r the matching ratio of log-gauge increments, for t* > c.
inline std::optional<double> power_law_root(std::array<std::pair<double, double>, 3> pts) {
  auto [a, qa] = pts[0];
  auto [b, qb] = pts[1];
  auto [c, qc] = pts[2];
  if (!(qa > 0.0 && qb > qa && qc > qb && a < b && b < c)) return std::nullopt;
  const double r = (std::log(qb) - std::log(qa)) / (std::log(qc) - std::log(qb));
  auto phi = [&](double s) {  // s = t* - c
    return std::log1p((b - a) / (s + c - b)) / std::log1p((c - b) / s) - r;
  };
  double lo = std::log(1e-18 * (1.0 + std::abs(c))), hi = std::log(1e6 * (c - a));
  if (!(phi(std::exp(lo)) < 0.0 && phi(std::exp(hi)) > 0.0)) return std::nullopt;
  for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
    const double mid = 0.5 * (lo + hi);
    (phi(std::exp(mid)) < 0.0 ? lo : hi) = mid;
  }
  return c + std::exp(0.5 * (lo + hi));
}

/// Escape time extrapolated from the last accepted (t, gauge) pairs; the
/// uncertainty is the spread of the last few three-point estimates.
inline std::optional<EscapeEstimate> extrapolate_blowup(const std::deque<std::pair<double, double>>& tail,
                                                        double t_end) {
  std::vector<double> roots;
  for (std::size_t i = 2; i < tail.size(); ++i) {
    auto root = power_law_root({tail[i - 2], tail[i - 1], tail[i]});
    if (root)
      roots.push_back(*root);
    else
      roots.clear();
  }
  if (roots.size() < 3) return std::nullopt;
  const double last = roots.back();
  double spread = 0.0;
  for (std::size_t i = roots.size() - 3; i < roots.size(); ++i) spread = std::max(spread, std::abs(roots[i] - last));
  return EscapeEstimate{std::max(last, t_end), spread};
}

}  // namespace detail

/// Integrate sys from (t0, s0) towards horizon.
inline TrajectoryResult integrate(const FlowSystem& sys, double t0, const State& s0, double horizon,
                                  const IntegrateOptions& opt = {}) {
  const std::size_t d = sys.state_dim;
  if (d == 0 || !sys.rhs) fail(ErrorCode::InvalidArgument, "flow system has no state or no right-hand side");
  if (s0.size() != d) fail(ErrorCode::InvalidInitialState, "initial state has the wrong dimension");
  if (!(std::isfinite(t0) && std::isfinite(horizon) && horizon > t0))
    fail(ErrorCode::InvalidArgument, "horizon must be finite and later than t0");
  for (double tol : {opt.rel_tol, opt.abs_tol})
    if (!(tol >= 1e-14 && tol <= 1e-2)) fail(ErrorCode::InvalidArgument, "tolerances must lie in [1e-14, 1e-2]");
  if (!detail::all_finite(s0)) fail(ErrorCode::InvalidInitialState, "initial state is not finite");
  if (sys.domain_guard && !sys.domain_guard(s0)) fail(ErrorCode::InvalidInitialState, "initial state outside the domain");

  const std::size_t n = d + 1;
  const detail::Augmented aug{sys, d};
  const double rtol = opt.rel_tol, atol = opt.abs_tol;

  std::vector<double> y(s0.begin(), s0.end()), ynew(n), ytmp(n), yerr(n);
  y.push_back(0.0);
  std::array<std::vector<double>, 7> k;
  for (auto& v : k) v.assign(n, 0.0);
  std::array<std::vector<double>, 5> rc;
  for (auto& v : rc) v.assign(n, 0.0);

  if (!aug.eval(t0, y, k[0], true))
    fail(ErrorCode::NonFiniteRHS, "right-hand side is not finite at the initial state");

  TrajectoryResult res;
  res.ledger.push_back({"arc_length", {}});
  for (const auto& [name, fn] : sys.ledger) res.ledger.push_back({name, {}});

  auto record = [&](double t, std::span<const double> yy) {
    res.times.push_back(t);
    res.states.emplace_back(yy.begin(), yy.begin() + static_cast<std::ptrdiff_t>(d));
    res.ledger[0].values.push_back(yy[d]);
    for (std::size_t i = 0; i < sys.ledger.size(); ++i)
      res.ledger[i + 1].values.push_back(sys.ledger[i].second(t, yy.first(d)));
  };

  std::vector<double> grid = opt.sample_times;
  if (grid.empty() && opt.sample_dt > 0.0) {
    const auto count = static_cast<std::size_t>(std::floor((horizon - t0) / opt.sample_dt + 1e-9));
    for (std::size_t i = 1; i <= count; ++i) grid.push_back(t0 + static_cast<double>(i) * opt.sample_dt);
  }
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) fail(ErrorCode::InvalidArgument, "sample times must be strictly increasing");
  const bool use_grid = !opt.sample_times.empty() || opt.sample_dt > 0.0;
  std::size_t next_grid = 0;
  while (next_grid < grid.size() && grid[next_grid] <= t0) ++next_grid;

  record(t0, y);

  auto norm_scaled = [&](const std::vector<double>& v, const std::vector<double>& ref) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double sk = atol + rtol * std::abs(ref[i]);
      s += (v[i] / sk) * (v[i] / sk);
    }
    return std::sqrt(s / static_cast<double>(n));
  };

  // Initial step size (Hairer–Wanner heuristic).
  double h;
  {
    const double d0 = norm_scaled(y, y), d1 = norm_scaled(k[0], y);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, horizon - t0);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k[0][i];
    double h1 = h0;
    if (aug.eval(t0 + h0, ytmp, k[1])) {
      for (std::size_t i = 0; i < n; ++i) yerr[i] = (k[1][i] - k[0][i]) / h0;
      const double d2 = norm_scaled(yerr, y);
      const double dm = std::max(d1, d2);
      h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
    }
    h = std::min({100.0 * h0, h1, horizon - t0, opt.max_step});
  }

  constexpr double kBeta = 0.04, kSafe = 0.9, kFacMin = 0.2, kFacMax = 10.0;
  const double expo1 = 0.2 - kBeta * 0.75;
  double facold = 1e-4;
  bool last_rejected = false;
  bool fail_nonfinite = false;
  double t = t0;
  std::deque<std::pair<double, double>> tail;
  tail.emplace_back(t0, aug.gauge(t0, y, k[0]));

  auto dense = [&](double theta, std::vector<double>& out) {
    const double th1 = 1.0 - theta;
    for (std::size_t i = 0; i < n; ++i)
      out[i] = rc[0][i] + theta * (rc[1][i] + th1 * (rc[2][i] + theta * (rc[3][i] + th1 * rc[4][i])));
  };
  auto stage = [&](std::size_t idx, double tc, std::initializer_list<std::pair<std::size_t, double>> terms) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (auto [j, a] : terms) acc += a * k[j][i];
      ytmp[i] = y[i] + h * acc;
    }
    return aug.eval(tc, ytmp, k[idx]);
  };

  for (;;) {
    if (res.accepted_steps + res.rejected_steps >= opt.max_steps) {
      res.termination = Termination::UserEvent;
      res.note = "step budget exhausted";
      break;
    }
    if (t >= horizon) {
      res.termination = Termination::HorizonReached;
      break;
    }
    h = std::min({h, opt.max_step, horizon - t});
    const double floor = 1e-13 * (1.0 + std::abs(t));
    if (h < floor) {
      // the speed limit catches genuine blow-up first, so a collapse forced by
      // NaN/inf from finite states is a defect of the right-hand side
      if (fail_nonfinite)
        fail(ErrorCode::NonFiniteRHS, "right-hand side is not finite near t = " + std::to_string(t));
      res.termination = Termination::StepCollapse;
      break;
    }
    const bool to_horizon = t + h >= horizon;
    const double tnew = to_horizon ? horizon : t + h;

    bool ok = stage(1, t + detail::c2 * h, {{0, detail::a21}}) &&
              stage(2, t + detail::c3 * h, {{0, detail::a31}, {1, detail::a32}}) &&
              stage(3, t + detail::c4 * h, {{0, detail::a41}, {1, detail::a42}, {2, detail::a43}}) &&
              stage(4, t + detail::c5 * h, {{0, detail::a51}, {1, detail::a52}, {2, detail::a53}, {3, detail::a54}}) &&
              stage(5, tnew, {{0, detail::a61}, {1, detail::a62}, {2, detail::a63}, {3, detail::a64}, {4, detail::a65}});
    if (ok) {
      for (std::size_t i = 0; i < n; ++i)
        ynew[i] = y[i] + h * (detail::a71 * k[0][i] + detail::a73 * k[2][i] + detail::a74 * k[3][i] +
                              detail::a75 * k[4][i] + detail::a76 * k[5][i]);
      ok = aug.eval(tnew, ynew, k[6]);
    }
    fail_nonfinite = !ok && aug.nonfinite;
    if (!ok) {
      h *= 0.25;
      ++res.rejected_steps;
      last_rejected = true;
      continue;
    }

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (detail::e1 * k[0][i] + detail::e3 * k[2][i] + detail::e4 * k[3][i] +
                            detail::e5 * k[4][i] + detail::e6 * k[5][i] + detail::e7 * k[6][i]);
      const double sk = atol + rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err += (e / sk) * (e / sk);
    }
    err = std::sqrt(err / static_cast<double>(n));
    if (!std::isfinite(err)) {
      h *= 0.25;
      ++res.rejected_steps;
      last_rejected = true;
      continue;
    }

    const double fac11 = std::pow(err, expo1);
    if (err > 1.0) {
      h /= std::min(1.0 / kFacMin, fac11 / kSafe);
      ++res.rejected_steps;
      last_rejected = true;
      continue;
    }

    // Accepted.
    double fac = fac11 / std::pow(facold, kBeta);
    fac = std::max(1.0 / kFacMax, std::min(1.0 / kFacMin, fac / kSafe));
    double hnew = h / fac;
    facold = std::max(err, 1e-4);
    if (last_rejected) hnew = std::min(hnew, h);
    last_rejected = false;
    ++res.accepted_steps;

    for (std::size_t i = 0; i < n; ++i) {
      const double dy = ynew[i] - y[i];
      const double bspl = h * k[0][i] - dy;
      rc[0][i] = y[i];
      rc[1][i] = dy;
      rc[2][i] = bspl;
      rc[3][i] = dy - h * k[6][i] - bspl;
      rc[4][i] = h * (detail::d1 * k[0][i] + detail::d3 * k[2][i] + detail::d4 * k[3][i] + detail::d5 * k[4][i] +
                      detail::d6 * k[5][i] + detail::d7 * k[6][i]);
    }

    auto emit_until = [&](double t_upto, bool inclusive) {
      while (next_grid < grid.size() && (grid[next_grid] < t_upto || (inclusive && grid[next_grid] <= t_upto))) {
        dense((grid[next_grid] - t) / h, ytmp);
        record(grid[next_grid], ytmp);
        ++next_grid;
      }
    };

    if (sys.domain_guard && !sys.domain_guard(std::span<const double>(ynew).first(d))) {
      double lo = 0.0, hi = 1.0;
      while ((hi - lo) * h > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        dense(mid, ytmp);
        if (sys.domain_guard(std::span<const double>(ytmp).first(d)))
          lo = mid;
        else
          hi = mid;
      }
      const double t_in = t + lo * h, t_out = t + hi * h;
      if (use_grid) emit_until(t_in, true);
      dense(lo, ytmp);
      if (t_in > res.times.back()) record(t_in, ytmp);
      res.termination = Termination::ExitedDomain;
      res.escape_estimate = EscapeEstimate{t_out, std::max(t_out - t_in, 1e-15 * (1.0 + std::abs(t_out)))};
      res.final_time = t_out;
      res.last_step = h;
      return res;
    }

    const double q = aug.gauge(tnew, ynew, k[6]);
    if (use_grid)
      emit_until(tnew, true);
    else
      record(tnew, ynew);
    t = tnew;
    y.swap(ynew);
    k[0].swap(k[6]);
    res.last_step = h;
    h = hnew;

    tail.emplace_back(t, q);
    if (tail.size() > 24) tail.pop_front();

    if (q > opt.speed_limit) {
      res.termination = Termination::SpeedOverflow;
      break;
    }
    if (sys.stop && sys.stop(t, std::span<const double>(y).first(d))) {
      res.termination = Termination::UserEvent;
      break;
    }
  }

  if (use_grid && t > res.times.back()) record(t, y);
  res.final_time = t;
  if (res.termination == Termination::StepCollapse || res.termination == Termination::SpeedOverflow) {
    EscapeEstimate e{t, 0.0};
    if (auto ex = detail::extrapolate_blowup(tail, t)) e = *ex;
    e.uncertainty += res.last_step + 1e-15 * (1.0 + std::abs(t));
    res.escape_estimate = e;
  }
  return res;
}

/// Escape time from two runs at rel_tol and rel_tol/16.
inline EscapeEstimate estimate_escape_time(const FlowSystem& sys, double t0, const State& s0, double rel_tol,
                                           double horizon, IntegrateOptions opt = {}) {
  opt.sample_dt = 0.0;
  opt.sample_times.clear();
  opt.rel_tol = rel_tol;
  const TrajectoryResult coarse = integrate(sys, t0, s0, horizon, opt);
  opt.rel_tol = std::max(rel_tol / 16.0, 1e-14);
  const TrajectoryResult fine = integrate(sys, t0, s0, horizon, opt);
  auto blew_up = [](const TrajectoryResult& r) {
    return r.termination == Termination::StepCollapse || r.termination == Termination::SpeedOverflow;
  };
  if (!blew_up(fine) || !blew_up(coarse))
    fail(ErrorCode::NotIncomplete, "trajectory does not blow up before the horizon at refined tolerance");
  const double tc = coarse.escape_estimate->time, tf = fine.escape_estimate->time;
  EscapeEstimate e;
  e.time = std::max(tc, tf);
  e.uncertainty = std::abs(tc - tf) + std::max(coarse.escape_estimate->uncertainty, fine.escape_estimate->uncertainty);
  return e;
}

// ---------------------------------------------------------------------------
// Scalar comparison ODE.

struct ScalarIVP {
  std::function<double(double t, double u)> f;
  double t0 = 0.0;
  double u0 = 0.0;
};

struct ScalarTrajectory {
  std::vector<double> t;
  std::vector<double> u;
  Termination termination = Termination::HorizonReached;
  std::optional<EscapeEstimate> escape_estimate;
};

inline FlowSystem scalar_system(const ScalarIVP& ivp) {
  FlowSystem sys;
  sys.state_dim = 1;
  sys.rhs = [f = ivp.f](double t, std::span<const double> s, std::span<double> ds) { ds[0] = f(t, s[0]); };
  return sys;
}

inline ScalarTrajectory solve_scalar_ivp(const ScalarIVP& ivp, double T, double rel_tol = 1e-10,
                                         std::vector<double> sample_times = {}, double abs_tol = 1e-12) {
  if (!(T > ivp.t0)) fail(ErrorCode::InvalidArgument, "scalar IVP horizon must exceed t0");
  IntegrateOptions opt;
  opt.rel_tol = rel_tol;
  opt.abs_tol = abs_tol;
  opt.sample_times = std::move(sample_times);
  const auto r = integrate(scalar_system(ivp), ivp.t0, {ivp.u0}, T, opt);
  ScalarTrajectory out;
  out.t = r.times;
  out.u = r.component(0);
  out.termination = r.termination;
  out.escape_estimate = r.escape_estimate;
  return out;
}

struct ComparisonReport {
  bool holds = true;
  std::optional<double> first_violation;
  /// min over grid points t > t0 of u(t) - w(t).
  double min_gap = std::numeric_limits<double>::infinity();
};

/// Check that the sampled w stays strictly below the IVP solution u.
inline ComparisonReport comparison_check(const ScalarTrajectory& w, const ScalarIVP& ivp, double strict_margin = 0.0,
                                         double rel_tol = 1e-10) {
  if (w.t.empty() || w.t.size() != w.u.size()) fail(ErrorCode::GridMismatch, "w needs matching nonempty t and u samples");
  for (std::size_t i = 1; i < w.t.size(); ++i)
    if (!(w.t[i] > w.t[i - 1])) fail(ErrorCode::GridMismatch, "w grid must be strictly increasing");
  if (w.t.front() < ivp.t0 - 1e-12) fail(ErrorCode::GridMismatch, "w grid starts before the IVP initial time");

  ComparisonReport rep;
  std::vector<double> interior;
  for (double t : w.t)
    if (t > ivp.t0) interior.push_back(t);
  std::vector<double> u_at(w.t.size(), ivp.u0);
  if (!interior.empty()) {
    const auto sol = solve_scalar_ivp(ivp, interior.back(), rel_tol, interior);
    std::size_t j = 0;
    for (std::size_t i = 0; i < w.t.size(); ++i) {
      if (!(w.t[i] > ivp.t0)) continue;
      while (j < sol.t.size() && sol.t[j] < w.t[i]) ++j;
      if (j == sol.t.size() || sol.t[j] != w.t[i])
        fail(ErrorCode::GridMismatch, "comparison solution does not reach t = " + std::to_string(w.t[i]));
      u_at[i] = sol.u[j];
    }
  }
  for (std::size_t i = 0; i < w.t.size(); ++i) {
    const bool at_start = !(w.t[i] > ivp.t0);
    const bool ok = at_start ? w.u[i] <= ivp.u0 + strict_margin : w.u[i] < u_at[i] + strict_margin;
    if (!at_start) rep.min_gap = std::min(rep.min_gap, u_at[i] - w.u[i]);
    if (!ok && rep.holds) {
      rep.holds = false;
      rep.first_violation = w.t[i];
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Time-dependent fields.

struct TimeDependentField {
  std::size_t dim = 0;
  std::function<void(double t, std::span<const double> x, std::span<double> dx)> rhs;
  GuardFn domain_guard;
  /// F(X) at (t, x); empty means the Euclidean norm of X.
  ScalarFn speed_gauge;
};

/// Autonomous field on the product with time appended as the last coordinate.
inline FlowSystem lift_time_dependent(TimeDependentField X) {
  FlowSystem sys;
  const std::size_t d = X.dim;
  sys.state_dim = d + 1;
  sys.rhs = [X, d](double, std::span<const double> s, std::span<double> ds) {
    X.rhs(s[d], s.first(d), ds.first(d));
    ds[d] = 1.0;
  };
  if (X.domain_guard) sys.domain_guard = [X, d](std::span<const double> s) { return X.domain_guard(s.first(d)); };
  sys.speed_gauge = [X, d](double, std::span<const double> s) {
    if (X.speed_gauge) return X.speed_gauge(s[d], s.first(d)) + 1.0;
    std::vector<double> dx(d);
    X.rhs(s[d], s.first(d), dx);
    double q = 0.0;
    for (double v : dx) q += v * v;
    return std::sqrt(q) + 1.0;
  };
  return sys;
}

// ---------------------------------------------------------------------------
// Numerical differentiation of sampled series.

/// Finite-difference weights for derivatives 0..m at z from nodes x (Fornberg).
inline std::vector<std::vector<double>> fd_weights(double z, std::span<const double> x, int m) {
  const int n = static_cast<int>(x.size()) - 1;
  std::vector<std::vector<double>> c(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(m + 1), 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[static_cast<std::size_t>(i)] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
              c1 * (k * c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(k - 1)] -
                    c5 * c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(k)]) / c2;
        c[static_cast<std::size_t>(i)][0] = -c1 * c5 * c[static_cast<std::size_t>(i - 1)][0] / c2;
      }
      for (int k = mn; k >= 1; --k)
        c[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
            (c4 * c[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] -
             k * c[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - 1)]) / c3;
      c[static_cast<std::size_t>(j)][0] = c4 * c[static_cast<std::size_t>(j)][0] / c3;
    }
    c1 = c2;
  }
  return c;
}

/// Derivative of the given order at every sample, from the five nearest
/// samples (centred in the interior, one-sided at the ends).
inline std::vector<double> differentiate(std::span<const double> t, std::span<const double> y, int order = 1) {
  if (t.size() != y.size()) fail(ErrorCode::InvalidArgument, "series length mismatch");
  if (t.size() < 5) fail(ErrorCode::TooFewSamples, "need at least 5 samples to differentiate");
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::size_t lo = i < 2 ? 0 : i - 2;
    lo = std::min(lo, t.size() - 5);
    const auto w = fd_weights(t[i], t.subspan(lo, 5), order);
    double acc = 0.0;
    for (std::size_t j = 0; j < 5; ++j) acc += w[j][static_cast<std::size_t>(order)] * y[lo + j];
    out[i] = acc;
  }
  return out;
}

}  // namespace cplab::ode
