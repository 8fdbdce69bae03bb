#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cplab/geom.hpp"
#include "cplab/ode.hpp"
#include "cplab/waves.hpp"

using namespace cplab;

namespace {

// Quadrature values computed with mpmath to 30 digits.
constexpr double kQuarticEscape = 1.31102877714605989817558005216;  // ∫_1^∞ dx / sqrt(x^4 - 1)

ode::FlowSystem power_flow(int p) {
  ode::FlowSystem sys;
  sys.state_dim = 1;
  sys.rhs = [p](double, std::span<const double> s, std::span<double> ds) { ds[0] = std::pow(s[0], p); };
  return sys;
}

// x'' = 2 x^3 as a first-order system.
ode::FlowSystem cubic_oscillator() {
  ode::FlowSystem sys;
  sys.state_dim = 2;
  sys.rhs = [](double, std::span<const double> s, std::span<double> ds) {
    ds[0] = s[1];
    ds[1] = 2.0 * s[0] * s[0] * s[0];
  };
  return sys;
}

bool blew_up(const ode::TrajectoryResult& r) {
  return r.termination == ode::Termination::StepCollapse || r.termination == ode::Termination::SpeedOverflow;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::NumericFailure;
}

}  // namespace

TEST(Integrate, ExponentialGrowth) {
  const auto r = ode::integrate(power_flow(1), 0.0, {1.0}, 1.0);
  EXPECT_EQ(r.termination, ode::Termination::HorizonReached);
  EXPECT_NEAR(r.states.back()[0], std::exp(1.0), 1e-8);
  EXPECT_DOUBLE_EQ(r.times.back(), 1.0);
}

TEST(Integrate, QuadraticBlowUp) {
  const auto r = ode::integrate(power_flow(2), 0.0, {1.0}, 5.0);
  EXPECT_TRUE(blew_up(r));
  ASSERT_TRUE(r.escape_estimate);
  EXPECT_GT(r.escape_estimate->uncertainty, 0.0);
  EXPECT_NEAR(r.escape_estimate->time, 1.0, 1e-4);
  EXPECT_LE(std::abs(r.escape_estimate->time - 1.0), r.escape_estimate->uncertainty);
}

TEST(Integrate, HalfPlaneExitIsBisected) {
  // u(t) = 1 - t, v = 0 on u > 0
  const auto r = ode::integrate(waves::geodesic_system(half_plane_metric()), 0.0, {1, 0, -1, 0}, 3.0);
  EXPECT_EQ(r.termination, ode::Termination::ExitedDomain);
  ASSERT_TRUE(r.escape_estimate);
  EXPECT_NEAR(r.escape_estimate->time, 1.0, 1e-12);
  EXPECT_NEAR(r.final_time, 1.0, 1e-12);
}

TEST(Integrate, SampleTimesIncreaseAndGridIsHonoured) {
  ode::IntegrateOptions opt;
  opt.sample_dt = 0.1;
  const auto r = ode::integrate(power_flow(1), 0.0, {1.0}, 1.0, opt);
  ASSERT_EQ(r.times.size(), 11u);
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    EXPECT_NEAR(r.times[i], 0.1 * static_cast<double>(i), 1e-12);
    EXPECT_NEAR(r.states[i][0], std::exp(r.times[i]), 1e-8);
  }
  const auto free = ode::integrate(power_flow(2), 0.0, {1.0}, 2.0);
  for (std::size_t i = 1; i < free.times.size(); ++i) ASSERT_GT(free.times[i], free.times[i - 1]);
}

TEST(Integrate, ArcLengthLedger) {
  // speed gauge |x'| = e^t, so arc length is e^t - 1
  const auto r = ode::integrate(power_flow(1), 0.0, {1.0}, 2.0);
  const auto& l = r.series("arc_length");
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l[i], std::exp(r.times[i]) - 1.0, 1e-7 * std::exp(r.times[i]));
}

TEST(Integrate, Errors) {
  ode::FlowSystem guarded = power_flow(1);
  guarded.domain_guard = [](std::span<const double> s) { return s[0] > 0.0; };
  EXPECT_EQ(code_of([&] { ode::integrate(guarded, 0, {-1.0}, 1); }), ErrorCode::InvalidInitialState);
  EXPECT_EQ(code_of([&] { ode::integrate(guarded, 0, {1.0, 2.0}, 1); }), ErrorCode::InvalidInitialState);
  EXPECT_EQ(code_of([&] { ode::integrate(guarded, 0, {NAN}, 1); }), ErrorCode::InvalidInitialState);
  ode::FlowSystem bad = power_flow(1);
  bad.rhs = [](double, std::span<const double>, std::span<double> ds) { ds[0] = NAN; };
  EXPECT_EQ(code_of([&] { ode::integrate(bad, 0, {1.0}, 1); }), ErrorCode::NonFiniteRHS);
  ode::IntegrateOptions loose;
  loose.rel_tol = 0.1;
  EXPECT_EQ(code_of([&] { ode::integrate(power_flow(1), 0, {1.0}, 1, loose); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { ode::integrate(power_flow(1), 1, {1.0}, 1); }), ErrorCode::InvalidArgument);
}

TEST(Integrate, NonFiniteInsideTheDomainIsReported) {
  // finite at the start, NaN once x > 2, with no domain guard
  ode::FlowSystem sys;
  sys.state_dim = 1;
  sys.rhs = [](double, std::span<const double> s, std::span<double> ds) { ds[0] = s[0] > 2.0 ? NAN : 1.0; };
  EXPECT_EQ(code_of([&] { ode::integrate(sys, 0, {0.0}, 5); }), ErrorCode::NonFiniteRHS);
}

TEST(Integrate, BitIdenticalReruns) {
  const auto sys = waves::geodesic_system(torus_lorentz_metric(expr::Expression("sin(2*pi*x1)")));
  const auto a = ode::integrate(sys, 0, {0.1, 0.2, 0.3, -0.7}, 1.0);
  const auto b = ode::integrate(sys, 0, {0.1, 0.2, 0.3, -0.7}, 1.0);
  EXPECT_EQ(a.times, b.times);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.ledger.size(), b.ledger.size());
  for (std::size_t i = 0; i < a.ledger.size(); ++i) EXPECT_EQ(a.ledger[i].values, b.ledger[i].values);
}

TEST(EscapeTime, QuadraticFlow) {
  const auto e = ode::estimate_escape_time(power_flow(2), 0.0, {1.0}, 1e-10, 10.0);
  EXPECT_NEAR(e.time, 1.0, 1e-6);
  EXPECT_GT(e.uncertainty, 0.0);
}

TEST(EscapeTime, PowerFlowsWithinReportedUncertainty) {
  for (int p : {2, 3, 4}) {
    const auto e = ode::estimate_escape_time(power_flow(p), 0.0, {1.0}, 1e-10, 10.0);
    const double exact = 1.0 / (p - 1);
    EXPECT_LE(std::abs(e.time - exact), e.uncertainty) << "p = " << p;
    EXPECT_LT(e.uncertainty, 1e-4);
  }
}

TEST(EscapeTime, CubicOscillatorMatchesQuadrature) {
  const auto e = ode::estimate_escape_time(cubic_oscillator(), 0.0, {1.0, 0.0}, 1e-10, 10.0);
  EXPECT_LE(std::abs(e.time - kQuarticEscape), e.uncertainty);
  EXPECT_NEAR(e.time, kQuarticEscape, 1e-5);
}

TEST(EscapeTime, TorusLightlikeGeodesic) {
  // on x = 0, y'' = (1/2) tau'(0) y'^2 = pi y'^2, so y' = 1/(1 - pi t)
  const auto sys = waves::geodesic_system(torus_lorentz_metric(expr::Expression("sin(2*pi*x1)")));
  const auto e = ode::estimate_escape_time(sys, 0.0, {0, 0, 0, 1}, 1e-10, 10.0);
  EXPECT_NEAR(e.time, 1.0 / M_PI, 1e-6);
  EXPECT_LE(std::abs(e.time - 1.0 / M_PI), e.uncertainty);
}

TEST(EscapeTime, CompleteFlowIsRejected) {
  EXPECT_EQ(code_of([] { ode::estimate_escape_time(power_flow(1), 0.0, {1.0}, 1e-10, 3.0); }),
            ErrorCode::NotIncomplete);
}

TEST(ScalarIvp, Examples) {
  {
    const auto s = ode::solve_scalar_ivp({[](double, double u) { return u * u; }, 0.0, 1.0}, 0.5);
    EXPECT_NEAR(s.u.back(), 2.0, 1e-8);
  }
  {
    const auto s = ode::solve_scalar_ivp({[](double, double u) { return 1 + u; }, 0.0, 0.0}, 2.0, 1e-10, {0.5, 1, 1.5, 2});
    ASSERT_EQ(s.t.size(), 5u);
    for (std::size_t i = 0; i < s.t.size(); ++i) EXPECT_NEAR(s.u[i], std::exp(s.t[i]) - 1, 1e-8);
  }
  {
    const auto s = ode::solve_scalar_ivp({[](double, double u) { return std::sqrt(1 + u * u); }, 0.0, 0.0}, 3.0);
    for (std::size_t i = 0; i < s.t.size(); ++i) EXPECT_NEAR(s.u[i], std::sinh(s.t[i]), 1e-8 * std::cosh(s.t[i]));
  }
  EXPECT_EQ(code_of([] { ode::solve_scalar_ivp({[](double, double u) { return u; }, 1.0, 0.0}, 1.0); }),
            ErrorCode::InvalidArgument);
}

TEST(Comparison, TangentDominatesIdentity) {
  ode::ScalarTrajectory w;
  for (int i = 0; i <= 100; ++i) {
    w.t.push_back(1.5 * i / 100.0);
    w.u.push_back(w.t.back());
  }
  const auto rep = ode::comparison_check(w, {[](double, double u) { return 1 + u * u; }, 0.0, 0.0});
  EXPECT_TRUE(rep.holds);
  EXPECT_FALSE(rep.first_violation);
  EXPECT_GT(rep.min_gap, 0.0);
}

TEST(Comparison, SupersolutionIsReported) {
  ode::ScalarTrajectory w;
  for (int i = 0; i <= 10; ++i) {
    w.t.push_back(0.1 * i);
    w.u.push_back(2 * w.t.back());
  }
  const auto rep = ode::comparison_check(w, {[](double, double) { return 1.0; }, 0.0, 0.0});
  EXPECT_FALSE(rep.holds);
  ASSERT_TRUE(rep.first_violation);
  EXPECT_DOUBLE_EQ(*rep.first_violation, 0.1);
  EXPECT_LT(rep.min_gap, 0.0);
}

TEST(Comparison, GridErrors) {
  const ode::ScalarIVP ivp{[](double, double) { return 1.0; }, 0.0, 0.0};
  EXPECT_EQ(code_of([&] { ode::comparison_check({}, ivp); }), ErrorCode::GridMismatch);
  ode::ScalarTrajectory w;
  w.t = {0.0, 0.5, 0.5};
  w.u = {0.0, 0.1, 0.2};
  EXPECT_EQ(code_of([&] { ode::comparison_check(w, ivp); }), ErrorCode::GridMismatch);
  w.t = {0.0, 0.5};
  EXPECT_EQ(code_of([&] { ode::comparison_check(w, ivp); }), ErrorCode::GridMismatch);
  w.t = {-1.0, 0.5};
  w.u = {0.0, 0.1};
  EXPECT_EQ(code_of([&] { ode::comparison_check(w, ivp); }), ErrorCode::GridMismatch);
}

// Subsolutions of random cubic right-hand sides built as solutions of
// w' = f - delta stay below the solution of u' = f.
TEST(Comparison, RandomCubicSubsolutions) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> coef(-1.0, 1.0), delta(0.01, 0.5), horizon(0.2, 1.0), start(-1.0, 1.0);
  int violations = 0, instances = 0;
  while (instances < 1000) {
    const double c0 = coef(rng), c1 = coef(rng), c2 = coef(rng), c3 = coef(rng);
    const double d = delta(rng), t0 = start(rng), u0 = start(rng);
    double T = t0 + horizon(rng);
    auto f = [=](double t, double u) { return c0 + c1 * u + c2 * u * u + c3 * u * u * u + 0.3 * std::sin(t); };
    // shrink the window until u stays finite on it (the Lipschitz window)
    const ode::ScalarIVP ivp{f, t0, u0};
    auto sol = ode::solve_scalar_ivp(ivp, T);
    while (sol.termination != ode::Termination::HorizonReached || std::abs(sol.u.back()) > 10.0) {
      T = t0 + 0.5 * (T - t0);
      sol = ode::solve_scalar_ivp(ivp, T);
    }
    std::vector<double> grid;
    for (int i = 1; i <= 50; ++i) grid.push_back(t0 + (T - t0) * i / 50.0);
    const auto w = ode::solve_scalar_ivp({[=](double t, double u) { return f(t, u) - d; }, t0, u0}, T, 1e-10, grid);
    if (w.termination != ode::Termination::HorizonReached) continue;
    ++instances;
    if (!ode::comparison_check(w, ivp).holds) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Lift, AutonomousFieldProjects) {
  ode::TimeDependentField X;
  X.dim = 2;
  X.rhs = [](double, std::span<const double> x, std::span<double> dx) {
    dx[0] = x[1];
    dx[1] = -x[0];
  };
  const auto lifted = ode::integrate(ode::lift_time_dependent(X), 0.0, {1.0, 0.0, 0.0}, 3.0);
  for (std::size_t i = 0; i < lifted.times.size(); ++i) {
    const double t = lifted.times[i];
    EXPECT_NEAR(lifted.states[i][0], std::cos(t), 1e-8);
    EXPECT_NEAR(lifted.states[i][1], -std::sin(t), 1e-8);
    EXPECT_NEAR(lifted.states[i][2], t, 1e-12);
  }
}

TEST(Lift, TimeDependentDrift) {
  ode::TimeDependentField X;
  X.dim = 1;
  X.rhs = [](double t, std::span<const double>, std::span<double> dx) { dx[0] = t; };
  const auto r = ode::integrate(ode::lift_time_dependent(X), 0.0, {0.0, 0.0}, 2.0);
  for (std::size_t i = 0; i < r.times.size(); ++i) EXPECT_NEAR(r.states[i][0], 0.5 * r.times[i] * r.times[i], 1e-10);
}

TEST(Lift, ArcLengthIsDirectSum) {
  ode::TimeDependentField X;
  X.dim = 1;
  X.rhs = [](double t, std::span<const double>, std::span<double> dx) { dx[0] = std::cos(t); };
  X.speed_gauge = [](double t, std::span<const double>) { return std::abs(std::cos(t)); };
  ode::FlowSystem plain;
  plain.state_dim = 1;
  plain.rhs = [](double t, std::span<const double>, std::span<double> ds) { ds[0] = std::cos(t); };
  plain.speed_gauge = [](double t, std::span<const double>) { return std::abs(std::cos(t)); };
  ode::IntegrateOptions opt;
  opt.sample_dt = 0.25;
  opt.rel_tol = 1e-12;
  opt.abs_tol = 1e-12;
  const auto lifted = ode::integrate(ode::lift_time_dependent(X), 0.0, {0.0, 0.0}, 4.0, opt);
  const auto direct = ode::integrate(plain, 0.0, {0.0}, 4.0, opt);
  ASSERT_EQ(lifted.times.size(), direct.times.size());
  const auto& ll = lifted.series("arc_length");
  const auto& ld = direct.series("arc_length");
  for (std::size_t i = 0; i < ll.size(); ++i) EXPECT_NEAR(ll[i], ld[i] + lifted.times[i], 1e-9);
}

TEST(Differentiate, ExactOnQuartics) {
  std::vector<double> t, y;
  for (int i = 0; i < 20; ++i) {
    t.push_back(0.1 * i + 0.003 * (i % 3));
    const double x = t.back();
    y.push_back(1 - 2 * x + 3 * x * x - x * x * x + 0.5 * x * x * x * x);
  }
  const auto d1 = ode::differentiate(t, y, 1);
  const auto d2 = ode::differentiate(t, y, 2);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double x = t[i];
    EXPECT_NEAR(d1[i], -2 + 6 * x - 3 * x * x + 2 * x * x * x, 1e-9);
    EXPECT_NEAR(d2[i], 6 - 6 * x + 6 * x * x, 1e-7);
  }
  EXPECT_EQ(code_of([] { ode::differentiate(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 2}); }),
            ErrorCode::TooFewSamples);
}
