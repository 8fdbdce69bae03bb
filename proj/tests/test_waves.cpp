#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cplab/waves.hpp"

using namespace cplab;
using namespace cplab::waves;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::NumericFailure;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "(%.17g)", x);
  return buf;
}

// bounded polarization profiles amp * sin(freq u + phase); small enough that
// transverse growth stays under the speed limit on long windows
PlaneWaveProfile random_profile(std::mt19937_64& rng, bool vacuum = false) {
  std::uniform_real_distribution<double> amp(-0.1, 0.1), freq(0.5, 2.0), phase(0.0, 6.28);
  auto f = [&] { return num(amp(rng)) + "*sin(" + num(freq(rng)) + "*u+" + num(phase(rng)) + ")"; };
  const std::string a = f(), b = f();
  return PlaneWaveProfile::polarization(a, b, vacuum ? "0" : f());
}

ode::TrajectoryResult geodesic(const MetricField& g, std::vector<double> s0, double T, double dt = 0.05) {
  ode::IntegrateOptions opt;
  opt.sample_dt = dt;
  return ode::integrate(geodesic_system(g), 0.0, s0, T, opt);
}

Vec state_point(const std::vector<double>& s, std::size_t n) { return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(n)); }
Vec state_velocity(const std::vector<double>& s, std::size_t n) {
  return Eigen::Map<const Vec>(s.data() + n, static_cast<Eigen::Index>(n));
}

// g(γ', γ') for a null initial velocity: pick v' so that -2 u' v' + H u'^2 + |x'|^2 = kind
std::vector<double> ppwave_state(const MetricField& g, Vec x, Vec xdot, double udot, double norm) {
  const Mat G = g.raw(x);
  const auto n = static_cast<std::size_t>(x.size());
  double rest = G(0, 0) * udot * udot;
  const Vec xt = xdot.tail(static_cast<Eigen::Index>(n - 2));
  rest += xt.dot(G.bottomRightCorner(static_cast<Eigen::Index>(n - 2), static_cast<Eigen::Index>(n - 2)) * xt);
  xdot(0) = udot;
  xdot(1) = (rest - norm) / (2 * udot);
  std::vector<double> s(x.data(), x.data() + n);
  s.insert(s.end(), xdot.data(), xdot.data() + n);
  return s;
}

}  // namespace

TEST(BuildPpWave, FlatProfileIsMinkowski) {
  PpWaveSpec spec;
  spec.n = 4;
  spec.H = expr::Expression("0");
  const auto g = build_ppwave(spec);
  const Vec p = make_vec({0.3, -1, 2, 0.5});
  Mat expect = Mat::Identity(4, 4);
  expect(0, 0) = 0;
  expect(1, 1) = 0;
  expect(0, 1) = expect(1, 0) = -1;
  EXPECT_EQ(metric_at(g, p), expect);
  EXPECT_LT(curvature_tensor(g, p).max_abs(), 1e-12);
}

TEST(BuildPpWave, ConstantProfileGivesQuadraticGuu) {
  const auto spec = plane_wave_spec(PlaneWaveProfile::matrix({{"2", "0.5"}, {"0.5", "-1"}}));
  const auto g = build_ppwave(spec);
  const Vec p = make_vec({1.2, 0.4, 0.7, -0.3});
  const double x = 0.7, y = -0.3;
  EXPECT_NEAR(metric_at(g, p)(0, 0), 2 * x * x + 2 * 0.5 * x * y - y * y, 1e-14);
  EXPECT_EQ(code_of([] { PpWaveSpec s; s.n = 2; s.H = expr::Expression("0"); build_ppwave(s); }), ErrorCode::BadDimension);
  EXPECT_EQ(code_of([] { plane_wave_spec(PlaneWaveProfile::matrix({{"1", "u"}, {"0", "1"}})); }),
            ErrorCode::InvalidArgument);
}

TEST(BuildPpWave, PolarizationMatchesMatrixForm) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto prof = random_profile(rng);
    const auto spec = plane_wave_spec(prof);
    for (int k = 0; k < 10; ++k) {
      const double uu = u(rng), x = u(rng), y = u(rng);
      const Mat A = prof.matrix_at(uu);
      expr::Slots s{};
      s[expr::kSlotU] = uu;
      s[expr::kSlotX1] = x;
      s[expr::kSlotX1 + 1] = y;
      const Vec xy = make_vec({x, y});
      EXPECT_NEAR(spec.H(s), xy.dot(A * xy), 1e-12 * (1 + std::abs(spec.H(s))));
    }
  }
}

TEST(BuildPpWave, VacuumWhenTraceProfileVanishes) {
  const auto g = build_ppwave(plane_wave_spec(PlaneWaveProfile::polarization("1", "0", "0")));
  for (const Vec& p : {make_vec({0, 0, 1, 1}), make_vec({0.5, 2, -0.3, 0.8})}) {
    const auto ric = ricci_tensor(g, p);
    EXPECT_LT(ric.max_abs(), 10 * ric.estimated_fd_error + 1e-12);
  }
  // c != 0 is not vacuum: R_uu = -tr A = -2c
  const auto h = build_ppwave(plane_wave_spec(PlaneWaveProfile::polarization("0", "0", "1")));
  const auto ric = ricci_tensor(h, make_vec({0, 0, 0.2, 0.1}));
  EXPECT_NEAR(std::abs(ric(0, 0)), 2.0, 1e-5);
}

TEST(PlaneWaves, RandomProfilesAreCompleteAndConserve) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = plane_wave_spec(random_profile(rng));
    const auto g = build_ppwave(spec);
    const auto s0 = ppwave_state(g, make_vec({u(rng), u(rng), u(rng), u(rng)}), make_vec({0, 0, u(rng), u(rng)}), 1.0,
                                 -1.0);
    const auto r = geodesic(g, s0, 100.0, 0.5);
    ASSERT_EQ(r.termination, ode::Termination::HorizonReached) << trial;
    double drift = 0;
    for (const auto& s : r.states) drift = std::max(drift, std::abs(s[4] - 1.0));
    EXPECT_LT(drift, 1e-7 * 2);
    const auto dv = [](const Vec&) { return make_vec({0, 1, 0, 0}); };
    EXPECT_LT(killing_conservation(g, dv, r), 1e-8);
  }
}

TEST(Reduction, FlatProfileGivesStraightLines) {
  PpWaveSpec spec;
  spec.n = 4;
  spec.H = expr::Expression("0");
  const auto g = build_ppwave(spec);
  const auto r = geodesic(g, ppwave_state(g, make_vec({0, 0, 1, 2}), make_vec({0, 0, 0.3, -0.4}), 1.0, 0.0), 5.0);
  EXPECT_LT(geodesic_riemannian_reduction_check(spec, r).max_residual, 1e-6);
}

TEST(Reduction, ConstantProfileMatchesClosedForm) {
  const auto spec = plane_wave_spec(PlaneWaveProfile::matrix({{"1", "0"}, {"0", "-1"}}));
  const auto g = build_ppwave(spec);
  const double x0 = 0.5, y0 = -0.2, xd = 0.1, yd = 0.3;
  const auto r = geodesic(g, ppwave_state(g, make_vec({0, 0, x0, y0}), make_vec({0, 0, xd, yd}), 1.0, -1.0), 4.0);
  const auto rep = geodesic_riemannian_reduction_check(spec, r);
  EXPECT_LT(rep.max_residual, 1e-5);
  EXPECT_LT(rep.udot_drift, 1e-7);
  // x'' = x and y'' = -y
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    const double t = r.times[i];
    EXPECT_NEAR(r.states[i][2], x0 * std::cosh(t) + xd * std::sinh(t), 1e-7 * std::cosh(t));
    EXPECT_NEAR(r.states[i][3], y0 * std::cos(t) + yd * std::sin(t), 1e-7);
  }
  // the standalone reduced run reproduces the same transverse motion
  const auto red = run_reduced(spec, r.states.front(), 0.0, 4.0, [] {
    ode::IntegrateOptions o;
    o.sample_dt = 0.05;
    return o;
  }());
  ASSERT_EQ(red.trajectory.times.size(), r.times.size());
  for (std::size_t i = 0; i < r.times.size(); ++i) EXPECT_NEAR(red.trajectory.states[i][0], r.states[i][2], 1e-7 * std::cosh(r.times[i]));
}

TEST(Reduction, RandomPpWaves) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> c(-0.5, 0.5), u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    PpWaveSpec spec;
    spec.n = 4;
    spec.H = expr::Expression(num(c(rng)) + "*sin(u)*x1^2 + " + num(0.2 * c(rng)) + "*x1*x2^3 + " + num(c(rng)) +
                              "*cos(x2 + u) + " + num(c(rng)) + "*x2^2");
    const auto g = build_ppwave(spec);
    const auto r = geodesic(g, ppwave_state(g, make_vec({u(rng), u(rng), u(rng), u(rng)}), make_vec({0, 0, u(rng), u(rng)}), 1.0, 0.0),
                            2.0, 0.02);
    ASSERT_EQ(r.termination, ode::Termination::HorizonReached);
    const auto rep = geodesic_riemannian_reduction_check(spec, r);
    EXPECT_LT(rep.max_residual, 1e-4) << trial;
    EXPECT_LT(rep.udot_drift, 1e-7 * 2);
  }
}

TEST(Reduction, QuarticProfileEscapesAtTheQuadratureTime) {
  constexpr double kQuarticEscape = 1.31102877714605989817558005216;
  PpWaveSpec spec;
  spec.n = 3;
  spec.H = expr::Expression("x1^4");
  const auto g = build_ppwave(spec);
  const auto s0 = ppwave_state(g, make_vec({0, 0, 1}), make_vec({0, 0, 0}), 1.0, 0.0);
  const auto geo = ode::estimate_escape_time(geodesic_system(g), 0.0, s0, 1e-10, 5.0);
  EXPECT_LE(std::abs(geo.time - kQuarticEscape), geo.uncertainty);
  const auto red = run_reduced(spec, s0, 0.0, 5.0);
  ASSERT_TRUE(red.blew_up());
  ASSERT_TRUE(red.escape);
  EXPECT_LE(std::abs(red.escape->time - kQuarticEscape), red.escape->uncertainty);
  EXPECT_LE(std::abs(red.escape->time - geo.time), red.escape->uncertainty + geo.uncertainty);
}

TEST(Reduction, TwoSidedAtDeskScale) {
  struct Case {
    std::string H;
    double horizon;
  };
  for (const auto& c : {Case{"x1^2 - x2^2", 10.0}, Case{"u*x1*x2", 5.0}, Case{"x1^4", 3.0}, Case{"-x2^6", 3.0},
                        Case{"x1^4 + x2^2", 3.0}}) {
    PpWaveSpec spec;
    spec.n = 4;
    spec.H = expr::Expression(c.H);
    const auto g = build_ppwave(spec);
    const auto s0 = ppwave_state(g, make_vec({0, 0, 1, 1}), make_vec({0, 0, 0.1, 0.2}), 1.0, 0.0);
    const auto geo = ode::integrate(geodesic_system(g), 0.0, s0, c.horizon);
    const auto red = run_reduced(spec, s0, 0.0, c.horizon);
    EXPECT_EQ(geo.termination == ode::Termination::HorizonReached,
              red.trajectory.termination == ode::Termination::HorizonReached)
        << c.H;
  }
}

TEST(Reduction, Errors) {
  PpWaveSpec spec;
  spec.n = 3;
  spec.H = expr::Expression("x1^2");
  const auto g = build_ppwave(spec);
  // u' = 0: a transverse geodesic at fixed u
  const auto r = geodesic(g, {0, 0, 0, 0, 1, 1}, 1.0);
  EXPECT_EQ(code_of([&] { geodesic_riemannian_reduction_check(spec, r); }), ErrorCode::LightlikeUOrbit);
  EXPECT_EQ(code_of([&] { run_reduced(spec, r.states.front(), 0, 1); }), ErrorCode::LightlikeUOrbit);
  const auto short_run = geodesic(g, {0, 0, 0, 1, 0, 0}, 0.1);
  EXPECT_EQ(code_of([&] { geodesic_riemannian_reduction_check(spec, short_run); }), ErrorCode::TooFewSamples);
}

TEST(Killing, TorusTranslationUpToEscape) {
  const auto g = torus_lorentz_metric(expr::Expression("sin(2*pi*x1)"));
  const auto dy = [](const Vec&) { return make_vec({0, 1}); };
  EXPECT_LT(killing_conservation(g, dy, geodesic(g, {0.1, 0.2, 0.3, -0.7}, 1.0, 0.01)), 1e-8);
  // lightlike geodesic escaping at 1/pi, sampled until just before the escape
  const auto r = geodesic(g, {0, 0, 0, 1}, 0.3, 0.01);
  EXPECT_LT(killing_conservation(g, dy, r), 1e-8);
}

TEST(Killing, MinkowskiRotation) {
  const auto g = minkowski_metric(3);
  const auto rot = [](const Vec& p) { return make_vec({0, -p(2), p(1)}); };
  EXPECT_LT(killing_conservation(g, rot, geodesic(g, {0, 1, 2, 1.5, 0.3, -0.4}, 10.0)), 1e-7);
  // a non-Killing field is not conserved
  const auto dilation = [](const Vec& p) { return make_vec({0, p(1), p(2)}); };
  EXPECT_GT(killing_conservation(g, dilation, geodesic(g, {0, 1, 2, 1.5, 0.3, -0.4}, 10.0)), 1.0);
}

TEST(Geodesics, CausalCharacterIsPreserved) {
  std::vector<MetricField> metrics = {minkowski_metric(4), torus_lorentz_metric(expr::Expression("sin(2*pi*x1)")),
                                      half_plane_metric(),
                                      build_ppwave(plane_wave_spec(PlaneWaveProfile::polarization("sin(u)", "0.3", "0")))};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& g : metrics) {
    const auto n = static_cast<std::size_t>(g.dim());
    for (int trial = 0; trial < 6; ++trial) {
      Vec x(static_cast<Eigen::Index>(n)), v(static_cast<Eigen::Index>(n));
      for (auto& c : x) c = u(rng);
      for (auto& c : v) c = u(rng);
      if (g.name() == "half-plane") x(0) = 2.0 + x(0);
      std::vector<double> s0(x.data(), x.data() + n);
      s0.insert(s0.end(), v.data(), v.data() + n);
      // short window: random torus geodesics escape after 1/(pi |y'|)
      const auto r = geodesic(g, s0, 0.2, 0.01);
      const auto kind = causal_character(g, x, v);
      for (const auto& s : r.states)
        EXPECT_EQ(causal_character(g, state_point(s, n), state_velocity(s, n)), kind) << g.name();
    }
  }
}

TEST(CurvatureCondition, PpWavePasses) {
  PpWaveSpec spec;
  spec.n = 4;
  spec.H = expr::Expression("sin(u)*x1^2 + 0.1*x1*x2^3 - 0.2*x2^2");
  const auto g = build_ppwave(spec);
  const auto dv = [](const Vec&) { return make_vec({0, 1, 0, 0}); };
  const auto rep = check_pp_curvature_condition(g, dv, {make_vec({0.2, 0.1, 0.5, -0.4}), make_vec({1, -1, 0.3, 0.8})});
  EXPECT_TRUE(rep.passes());
  for (const auto& p : rep.points) {
    EXPECT_TRUE(p.field_lightlike);
    EXPECT_EQ(p.basis_size, 3);
    EXPECT_LT(p.parallel_defect, 1e-8);
  }
  // the check is not vacuous: a transverse field picks up curvature
  const auto dx = [](const Vec&) { return make_vec({0, 0, 1, 0}); };
  EXPECT_FALSE(check_pp_curvature_condition(g, dx, {make_vec({0.2, 0.1, 0.5, -0.4})}).passes());
}

TEST(CurvatureCondition, FlatSpace) {
  PpWaveSpec spec;
  spec.n = 4;
  spec.H = expr::Expression("0");
  const auto rep = check_pp_curvature_condition(build_ppwave(spec), [](const Vec&) { return make_vec({0, 1, 0, 0}); },
                                                {make_vec({0, 0, 0, 0})});
  EXPECT_LT(rep.max_abs, 1e-12);
  EXPECT_TRUE(rep.passes());
}

// In two dimensions the orthogonal complement of any field is a line, so
// R(U, W) vanishes by antisymmetry whatever tau is.
TEST(CurvatureCondition, TwoDimensionalComplementIsALine) {
  const auto g = torus_lorentz_metric(expr::Expression("sin(2*pi*x1)"));
  const auto dy = [](const Vec&) { return make_vec({0, 1}); };
  const Vec p = make_vec({0.25, 0.1});  // tau'' = -4 pi^2 here
  EXPECT_GT(curvature_tensor(g, p).max_abs(), 1.0);
  const auto rep = check_pp_curvature_condition(g, dy, {p});
  EXPECT_EQ(rep.points[0].basis_size, 1);
  EXPECT_LT(rep.max_abs, 1e-9);
}

TEST(CurvatureCondition, ZeroField) {
  const auto g = minkowski_metric(3);
  EXPECT_EQ(code_of([&] { check_pp_curvature_condition(g, [](const Vec&) { return Vec(Vec::Zero(3)); }, {Vec(Vec::Zero(3))}); }),
            ErrorCode::ZeroV);
}

TEST(OrthogonalComplement, IsOrthogonalAndSpans) {
  const auto g = build_ppwave(plane_wave_spec(PlaneWaveProfile::polarization("1", "0.5", "0")));
  const Vec p = make_vec({0.3, 0.1, 0.7, -0.2});
  const Mat G = metric_at(g, p);
  for (const Vec& V : {make_vec({0, 1, 0, 0}), make_vec({1, 0.2, 0.1, 0}), make_vec({0, 0, 1, 1})}) {
    const bool light = causal_character(g, p, V) == CausalCharacter::Lightlike;
    const auto basis = orthogonal_complement_basis(G, V, light);
    ASSERT_EQ(basis.size(), 3u);
    Mat B(4, 3);
    for (int i = 0; i < 3; ++i) {
      EXPECT_LT(std::abs(basis[static_cast<std::size_t>(i)].dot(G * V)), 1e-12);
      B.col(i) = basis[static_cast<std::size_t>(i)];
    }
    EXPECT_EQ(Eigen::FullPivLU<Mat>(B).rank(), 3);
  }
}
