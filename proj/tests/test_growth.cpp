#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cplab/growth.hpp"

using namespace cplab;
using namespace cplab::growth;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::NumericFailure;
}

double norm2(const Vec& p) { return p.squaredNorm(); }

}  // namespace

TEST(Classify, Examples) {
  const auto affine = classify_primarily_complete(BoundingFunction::from_expression("1 + x1", AsymptoticTag::affine()), 1000);
  EXPECT_EQ(affine.verdict, PrimaryVerdict::PrimarilyComplete);
  EXPECT_EQ(affine.decided_by, "tag");
  EXPECT_NEAR(affine.partial_integral, std::log(1001.0), 1e-7);

  for (auto tag : {AsymptoticTag::poly(2), AsymptoticTag::untagged()}) {
    const auto c = classify_primarily_complete(BoundingFunction::from_expression("1 + x1^2", tag), 1000);
    EXPECT_EQ(c.verdict, PrimaryVerdict::NotPrimarilyComplete) << tag.to_string();
    EXPECT_NEAR(c.partial_integral, std::atan(1000.0), 1e-7);
  }

  const auto xlog = classify_primarily_complete(
      BoundingFunction::from_expression("(x1 + exp(1)) * log(x1 + exp(1))", AsymptoticTag::x_log_iterates(1)), 1000);
  EXPECT_EQ(xlog.verdict, PrimaryVerdict::PrimarilyComplete);
  // antiderivative log(log(x + e))
  EXPECT_NEAR(xlog.partial_integral, std::log(std::log(1000.0 + std::exp(1.0))), 1e-7);
}

TEST(Classify, SlopeFitOnUntaggedFunctions) {
  const auto lin = classify_primarily_complete(BoundingFunction::from_expression("1 + x1", AsymptoticTag::untagged()), 1000);
  // slope of 1 + x is just below 1, inside the inconclusive band
  EXPECT_EQ(lin.verdict, PrimaryVerdict::Inconclusive);
  EXPECT_EQ(lin.decided_by, "slope-fit");
  const auto sqrt_growth =
      classify_primarily_complete(BoundingFunction::from_expression("sqrt(1 + x1)", AsymptoticTag::untagged()), 1000);
  EXPECT_EQ(sqrt_growth.verdict, PrimaryVerdict::PrimarilyComplete);
  EXPECT_NEAR(sqrt_growth.loglog_slope, 0.5, 0.01);
  const auto quartic =
      classify_primarily_complete(BoundingFunction::from_expression("sqrt(1 + x1^4)", AsymptoticTag::untagged()), 1000);
  EXPECT_EQ(quartic.verdict, PrimaryVerdict::NotPrimarilyComplete);
  EXPECT_NEAR(quartic.loglog_slope, 2.0, 0.01);
}

TEST(Classify, TagsNeverContradictThemselves) {
  const std::vector<std::string> fns = {"1", "1 + x1", "1 + x1^2", "exp(x1/100)", "1 + x1^3", "sqrt(1 + x1)",
                                        "(x1 + exp(1)) * log(x1 + exp(1))"};
  for (const auto& src : fns) {
    for (double d : {2.0, 3.0, 4.5}) {
      const auto c = classify_primarily_complete(BoundingFunction::from_expression(src, AsymptoticTag::poly(d)), 1000);
      EXPECT_NE(c.verdict, PrimaryVerdict::PrimarilyComplete) << src << " poly(" << d << ")";
    }
    const auto c = classify_primarily_complete(BoundingFunction::from_expression(src, AsymptoticTag::affine()), 1000);
    EXPECT_NE(c.verdict, PrimaryVerdict::NotPrimarilyComplete) << src;
  }
}

TEST(Classify, Errors) {
  EXPECT_EQ(code_of([] { BoundingFunction::from_expression("x1 - 1", AsymptoticTag::untagged()); }),
            ErrorCode::NonPositiveAlpha);
  EXPECT_EQ(code_of([] { BoundingFunction::from_expression("2 + sin(x1)", AsymptoticTag::untagged()); }),
            ErrorCode::NotNondecreasing);
  const auto a = BoundingFunction::from_expression("1 + x1", AsymptoticTag::affine());
  EXPECT_EQ(code_of([&] { classify_primarily_complete(a, 50); }), ErrorCode::InvalidArgument);
}

TEST(PositivelyComplete, Examples) {
  const auto flat = positively_complete_to_primary([](double) { return 0.0; }, AsymptoticTag::untagged(), 1.0);
  EXPECT_DOUBLE_EQ(flat(0.0), 1.0);
  EXPECT_DOUBLE_EQ(flat(500.0), 1.0);
  EXPECT_EQ(classify_primarily_complete(flat, 1000).verdict, PrimaryVerdict::PrimarilyComplete);

  const auto quad = positively_complete_to_primary([](double s) { return -s * s; }, AsymptoticTag::poly(2), 1.0);
  EXPECT_EQ(quad.tag().kind, TagKind::Affine);
  EXPECT_NEAR(quad(3.0), std::sqrt(10.0), 1e-14);
  EXPECT_EQ(classify_primarily_complete(quad, 1000).verdict, PrimaryVerdict::PrimarilyComplete);

  const auto quart = positively_complete_to_primary([](double s) { return -s * s * s * s; }, AsymptoticTag::poly(4), 1.0);
  EXPECT_NEAR(quart(3.0), std::sqrt(82.0), 1e-14);
  EXPECT_EQ(classify_primarily_complete(quart, 1000).verdict, PrimaryVerdict::NotPrimarilyComplete);
  const auto quart_untagged =
      positively_complete_to_primary([](double s) { return -s * s * s * s; }, AsymptoticTag::untagged(), 1.0);
  EXPECT_EQ(classify_primarily_complete(quart_untagged, 1000).verdict, PrimaryVerdict::NotPrimarilyComplete);
}

TEST(PositivelyComplete, DefaultEnergyAndErrors) {
  const auto a = positively_complete_to_primary([](double s) { return 2.0 - s; }, AsymptoticTag::untagged());
  EXPECT_DOUBLE_EQ(a(0.0), 1.0);  // e = V0(0) + 1
  EXPECT_EQ(code_of([] { positively_complete_to_primary([](double) { return 1.0; }, AsymptoticTag::untagged(), 1.0); }),
            ErrorCode::EnergyTooLow);
}

TEST(PositivelyComplete, MonotoneOnGrid) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    auto v0 = [=](double s) { return -(a * s + b * s * s + c * std::log1p(s)); };
    const auto alpha = positively_complete_to_primary(v0, AsymptoticTag::untagged(), 0.5);
    double prev = alpha(0.0);
    for (int i = 1; i <= 2000; ++i) {
      const double x = 1000.0 * i / 2000.0;
      ASSERT_GE(alpha(x), prev);
      prev = alpha(x);
    }
  }
}

TEST(Fit, ConstantGauge) {
  const auto region = ball_region(Vec::Zero(2), 5.0);
  const auto out = fit_bounding_function([](const Vec&) { return 2.5; }, region, Family::Affine, 2000);
  ASSERT_TRUE(out.certificate);
  EXPECT_NEAR(out.certificate->constant("C0"), 2.5, 1e-8);
  EXPECT_NEAR(out.certificate->constant("C1"), 0.0, 1e-12);
  EXPECT_GT(out.certificate->margin, 0.0);
  EXPECT_EQ(out.certificate->proxy, "chart-distance-to-base-point");
}

TEST(Fit, AffineGaugeIsReproduced) {
  const auto region = ball_region(Vec::Zero(3), 4.0);
  const auto out = fit_bounding_function([](const Vec& p) { return 1.0 + p.norm(); }, region, Family::Affine, 2000);
  ASSERT_TRUE(out.certificate);
  EXPECT_NEAR(out.certificate->constant("C0"), 1.0, 1e-9);
  EXPECT_NEAR(out.certificate->constant("C1"), 1.0, 1e-9);
}

TEST(Fit, QuadraticFieldFailsAtBoundary) {
  const auto region = ball_region(Vec::Zero(1), 10.0);
  auto gauge = [](const Vec& p) { return p[0] * p[0]; };
  const auto out = fit_bounding_function(gauge, region, Family::Affine, 2000);
  ASSERT_FALSE(out.certificate);
  ASSERT_TRUE(out.failure);
  // independent scan for the worst ratio
  double worst_ratio = -1, worst_at = 0;
  for (const auto& p : region.sample(2000)) {
    const double r = gauge(p) / (1 + std::abs(p[0]));
    if (r > worst_ratio) {
      worst_ratio = r;
      worst_at = std::abs(p[0]);
    }
  }
  EXPECT_DOUBLE_EQ(worst_at, 10.0);
  EXPECT_DOUBLE_EQ(std::abs(out.failure->worst_point[0]), worst_at);
}

TEST(Fit, AlphaScaledFamily) {
  const auto region = ball_region(Vec::Zero(2), 20.0);
  const auto alpha = BoundingFunction::from_expression("(x1 + exp(1)) * log(x1 + exp(1))", AsymptoticTag::x_log_iterates(1));
  const auto ok = fit_bounding_function([](const Vec& p) { return 3.0 + p.norm(); }, region, Family::AlphaScaled, 2000, &alpha);
  ASSERT_TRUE(ok.certificate);
  EXPECT_EQ(ok.certificate->kind, CertificateKind::PrimarilyBounded);
  const auto bad = fit_bounding_function([](const Vec& p) { return p.squaredNorm(); }, region, Family::AlphaScaled, 2000, &alpha);
  EXPECT_TRUE(bad.failure);
}

TEST(Fit, CertificatesAreSoundOnTheirSamples) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    const auto region = ball_region(Vec::Zero(2), 1.0 + u(rng), 1000 + trial);
    auto gauge = [=](const Vec& p) { return a + b * (1 + std::cos(3 * std::atan2(p[1], p[0]))) * p.norm() + c * std::sqrt(p.norm()); };
    const auto out = fit_bounding_function(gauge, region, Family::Affine, 1500);
    ASSERT_TRUE(out.certificate);
    const auto s = growth::detail::sample_gauge(gauge, [](const Vec& p) { return p.norm(); }, region, 1500);
    const double slack = affine_slack(out.certificate->constant("C0"), out.certificate->constant("C1"), s);
    EXPECT_GT(slack, 0.0);
    EXPECT_NEAR(slack, out.certificate->margin, 1e-12);
  }
}

TEST(Fit, Errors) {
  EXPECT_EQ(code_of([] { ball_region(Vec::Zero(2), 0.0); }), ErrorCode::EmptyRegion);
  RegionSampler empty{"empty", Vec::Zero(1), [](std::size_t) { return std::vector<Vec>{}; }};
  EXPECT_EQ(code_of([&] { fit_bounding_function([](const Vec&) { return 1.0; }, empty, Family::Affine, 1000); }),
            ErrorCode::EmptyRegion);
  const auto region = ball_region(Vec::Zero(1), 1.0);
  EXPECT_EQ(code_of([&] { fit_bounding_function([](const Vec&) { return 1.0; }, region, Family::Affine, 10); }),
            ErrorCode::InvalidArgument);
}

TEST(ProperCriterion, Examples) {
  const auto region = ball_region(Vec::Zero(2), 3.0);
  const auto lin = check_proper_criterion(norm2, [](const Vec& p) { return 2 * norm2(p); }, region);
  ASSERT_TRUE(lin.certificate);
  EXPECT_EQ(lin.certificate->kind, CertificateKind::ProperMapBound);
  EXPECT_NEAR(lin.certificate->constant("C1"), 2.0, 1e-9);
  EXPECT_NEAR(lin.certificate->constant("C2"), 0.0, 1e-9);

  const auto zero = check_proper_criterion(norm2, [](const Vec&) { return 0.0; }, region);
  ASSERT_TRUE(zero.certificate);
  EXPECT_NEAR(zero.certificate->constant("C1"), 0.0, 1e-12);
  EXPECT_NEAR(zero.certificate->constant("C2"), 0.0, 1e-9);

  auto xf = [](const Vec& p) { return std::exp(norm2(p)); };
  const auto fast = check_proper_criterion(norm2, xf, region);
  ASSERT_TRUE(fast.failure);
  // ratio scan oracle: the worst ratio |Xf| / (1 + |f|) sits on the boundary
  double worst_ratio = -1, worst_norm = 0;
  for (const auto& p : region.sample(1000)) {
    const double r = xf(p) / (1 + norm2(p));
    if (r > worst_ratio) {
      worst_ratio = r;
      worst_norm = p.norm();
    }
  }
  EXPECT_NEAR(worst_norm, 3.0, 1e-12);
  EXPECT_NEAR(fast.failure->worst_point.norm(), 3.0, 1e-12);
}
