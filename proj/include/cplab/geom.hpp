#pragma once

// Pointwise geometry on coordinate charts: metric evaluation, Levi-Civita
// Christoffel symbols, causal classification, curvature and its covariant
// derivatives. Derivatives are order-4 central differences with step-halving
// error estimates.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "cplab/error.hpp"
#include "cplab/expr.hpp"

namespace cplab {

inline constexpr int kMaxDim = 8;
inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kEps = std::numeric_limits<double>::epsilon();

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

struct Interval {
  double lo = -kInf;
  double hi = kInf;
};

/// Coordinate chart: open box bounds, optional periods, and the DSL variable
/// slot each coordinate binds to.
class ChartDomain {
 public:
  ChartDomain() = default;

  explicit ChartDomain(int dim, std::vector<Interval> bounds = {}, std::vector<std::optional<double>> periods = {},
                       std::vector<std::size_t> slots = {})
      : dim_(dim), bounds_(std::move(bounds)), periods_(std::move(periods)), slots_(std::move(slots)) {
    if (dim < 1 || dim > kMaxDim) fail(ErrorCode::BadDimension, "chart dimension must be in [1, 8], got " + std::to_string(dim));
    const auto n = static_cast<std::size_t>(dim);
    if (bounds_.empty()) bounds_.assign(n, Interval{});
    if (periods_.empty()) periods_.assign(n, std::nullopt);
    if (slots_.empty())
      for (std::size_t i = 0; i < n; ++i) slots_.push_back(expr::kSlotX1 + i);
    if (bounds_.size() != n || periods_.size() != n || slots_.size() != n)
      fail(ErrorCode::BadDimension, "chart descriptor arity does not match dimension");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(bounds_[i].lo < bounds_[i].hi)) fail(ErrorCode::InvalidArgument, "empty coordinate interval");
      if (periods_[i] && !(std::isfinite(*periods_[i]) && *periods_[i] > 0.0))
        fail(ErrorCode::InvalidArgument, "period must be finite and positive");
      if (slots_[i] >= expr::kNumSlots) fail(ErrorCode::InvalidArgument, "bad variable slot");
    }
  }

  int dim() const { return dim_; }
  const std::vector<Interval>& bounds() const { return bounds_; }
  const std::vector<std::optional<double>>& periods() const { return periods_; }
  const std::vector<std::size_t>& slots() const { return slots_; }

  /// Periodic coordinates mapped into [0, period).
  Vec reduce(const Vec& p) const {
    Vec q = p;
    for (int i = 0; i < dim_; ++i) {
      if (const auto& per = periods_[static_cast<std::size_t>(i)]) {
        double r = std::fmod(q(i), *per);
        if (r < 0) r += *per;
        if (r >= *per) r = 0.0;
        q(i) = r;
      }
    }
    return q;
  }

  /// Distance from p to the nearest finite bound (infinite when unbounded).
  double margin(const Vec& p) const {
    Vec q = reduce(p);
    double m = kInf;
    for (int i = 0; i < dim_; ++i) {
      const auto& b = bounds_[static_cast<std::size_t>(i)];
      if (periods_[static_cast<std::size_t>(i)]) continue;
      m = std::min({m, q(i) - b.lo, b.hi - q(i)});
    }
    return m;
  }

  bool contains(const Vec& p) const {
    if (p.size() != dim_) return false;
    for (int i = 0; i < dim_; ++i)
      if (!std::isfinite(p(i))) return false;
    return margin(p) > 0.0;
  }

  /// Fill DSL variable slots from a chart point and time.
  expr::Slots slots_for(const Vec& p, double t = 0.0) const {
    expr::Slots s{};
    s[expr::kSlotT] = t;
    for (int i = 0; i < dim_; ++i) s[slots_[static_cast<std::size_t>(i)]] = p(i);
    return s;
  }

 private:
  int dim_ = 2;
  std::vector<Interval> bounds_;
  std::vector<std::optional<double>> periods_;
  std::vector<std::size_t> slots_;
};

enum class Smoothness { AnalyticExpression, BuiltinClosedForm };

using MetricFn = std::function<void(const Vec& p, Mat& g)>;
/// Γ^a_bc stored at [a*n*n + b*n + c].
using ChristoffelFn = std::function<void(const Vec& p, std::span<double> gamma)>;

class MetricField {
 public:
  MetricField() = default;
  MetricField(std::string name, ChartDomain domain, int signature, MetricFn fn,
              Smoothness source = Smoothness::BuiltinClosedForm)
      : name_(std::move(name)), domain_(std::move(domain)), signature_(signature), fn_(std::move(fn)), source_(source) {
    if (signature < 0 || signature > domain_.dim()) fail(ErrorCode::InvalidArgument, "bad signature index");
  }

  const std::string& name() const { return name_; }
  const ChartDomain& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  int signature() const { return signature_; }
  Smoothness smoothness_source() const { return source_; }

  /// Unchecked evaluation after periodic reduction; symmetrised.
  Mat raw(const Vec& p) const {
    Mat g(dim(), dim());
    fn_(domain_.reduce(p), g);
    return 0.5 * (g + g.transpose());
  }

  const std::optional<ChristoffelFn>& analytic_christoffel() const { return analytic_; }
  void set_analytic_christoffel(ChristoffelFn fn) { analytic_ = std::move(fn); }

 private:
  std::string name_;
  ChartDomain domain_;
  int signature_ = 0;
  MetricFn fn_;
  Smoothness source_ = Smoothness::BuiltinClosedForm;
  std::optional<ChristoffelFn> analytic_;
};

/// Components with an index layout string such as "^a_bcd" and a single
/// finite-difference error estimate for the whole sample.
struct TensorSample {
  Vec point;
  int dim = 0;
  std::string layout;
  std::vector<double> components;
  double estimated_fd_error = 0.0;

  int rank() const {
    return static_cast<int>(std::count_if(layout.begin(), layout.end(), [](char c) { return c != '^' && c != '_'; }));
  }

  double max_abs() const {
    double m = 0.0;
    for (double c : components) m = std::max(m, std::abs(c));
    return m;
  }

  template <class... I>
  double operator()(I... idx) const {
    std::size_t k = 0;
    ((k = k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(idx)), ...);
    return components[k];
  }
};

/// Step scales for the nested finite differences. The Christoffel step follows
/// h = max(1e-4, 1e-4 (1 + |p|_inf)); outer differentiations (curvature and its
/// covariant derivatives) use a coarser step so roundoff does not compound.
struct FdOptions {
  double christoffel_scale = 1e-4;
  double curvature_scale = 1e-2;
  double derivative_scale = 1e-2;
  /// Values below this are treated as resolved zeros by the FDUnstable test.
  double zero_tolerance = 1e-4;
};

inline double fd_step(const Vec& p, double scale) {
  double inf_norm = p.size() ? p.cwiseAbs().maxCoeff() : 0.0;
  return std::max(scale, scale * (1.0 + inf_norm));
}

// Order-4 central first-derivative weights at offsets -2..2 (divide by h).
inline constexpr std::array<double, 5> kD1 = {1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0};
// Order-4 central second-derivative weights at offsets -2..2 (divide by h^2).
inline constexpr std::array<double, 5> kD2 = {-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};

/// kD1 applied to samples at offsets -2, -1, 1, 2, paired so that equal
/// samples cancel exactly. Summing the weighted terms one by one leaves
/// roundoff of order eps |f| / h in directions f does not depend on, which
/// for large f is loud enough to upset step control.
inline double d1_combine(double m2, double m1, double p1, double p2) { return ((m2 - p2) + 8.0 * (p1 - m1)) / 12.0; }

template <class F>
auto central_d1(F&& at) {
  using T = std::decay_t<decltype(at(1))>;
  const T m2 = at(-2), m1 = at(-1), p1 = at(1), p2 = at(2);
  if constexpr (std::is_arithmetic_v<T>) {
    return d1_combine(m2, m1, p1, p2);
  } else {
    T out = ((m2 - p2) + 8.0 * (p1 - m1)) / 12.0;
    return out;
  }
}

/// Element-wise central_d1 for flat component arrays.
template <class F>
std::vector<double> central_d1_components(F&& at) {
  const std::vector<double> m2 = at(-2), m1 = at(-1), p1 = at(1), p2 = at(2);
  std::vector<double> out(m2.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d1_combine(m2[i], m1[i], p1[i], p2[i]);
  return out;
}

namespace detail {

inline void require_dim(const MetricField& g, const Vec& p) {
  if (p.size() != g.dim()) fail(ErrorCode::BadDimension, "point dimension does not match metric");
}

inline void check_domain(const MetricField& g, const Vec& p, double margin) {
  require_dim(g, p);
  for (int i = 0; i < p.size(); ++i)
    if (!std::isfinite(p(i))) fail(ErrorCode::OutOfDomain, "non-finite coordinate");
  if (!(g.domain().margin(p) > margin))
    fail(ErrorCode::OutOfDomain, "point outside chart '" + g.name() + "' (or within stencil margin of its boundary)");
}

/// |det| of the row-scaled matrix; scale-free invertibility gauge.
inline double scaled_det(const Mat& m) {
  Mat s = m;
  for (int i = 0; i < s.rows(); ++i) {
    double r = s.row(i).cwiseAbs().maxCoeff();
    if (r == 0.0) return 0.0;
    s.row(i) /= r;
  }
  return std::abs(s.fullPivLu().determinant());
}

inline void check_nondegenerate(const Mat& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j))) fail(ErrorCode::DegenerateMetric, "non-finite metric component");
  if (!(scaled_det(m) > 1e-12)) fail(ErrorCode::DegenerateMetric, "metric is not invertible");
}

inline int negative_eigenvalues(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  int k = 0;
  for (int i = 0; i < m.rows(); ++i)
    if (es.eigenvalues()(i) < 0.0) ++k;
  return k;
}

/// ∂_k g for every chart direction k, stencil step h.
inline void metric_derivatives(const MetricField& g, const Vec& p, double h, std::array<Mat, kMaxDim>& dg) {
  const int n = g.dim();
  for (int k = 0; k < n; ++k) {
    dg[static_cast<std::size_t>(k)] = central_d1([&](int s) {
                                        Vec q = p;
                                        q(k) += s * h;
                                        return g.raw(q);
                                      }) /
                                      h;
  }
}

inline void christoffel_from(const Mat& ginv, const std::array<Mat, kMaxDim>& dg, int n, std::span<double> out) {
  const auto N = static_cast<std::size_t>(n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = b; c < n; ++c) {
        double acc = 0.0;
        for (int d = 0; d < n; ++d)
          acc += ginv(a, d) * (dg[static_cast<std::size_t>(b)](d, c) + dg[static_cast<std::size_t>(c)](d, b) -
                               dg[static_cast<std::size_t>(d)](b, c));
        acc *= 0.5;
        out[(static_cast<std::size_t>(a) * N + static_cast<std::size_t>(b)) * N + static_cast<std::size_t>(c)] = acc;
        out[(static_cast<std::size_t>(a) * N + static_cast<std::size_t>(c)) * N + static_cast<std::size_t>(b)] = acc;
      }
}

inline void christoffel_at_step(const MetricField& g, const Vec& p, double h, std::span<double> out) {
  std::array<Mat, kMaxDim> dg;
  metric_derivatives(g, p, h, dg);
  Mat ginv = g.raw(p).inverse();
  christoffel_from(ginv, dg, g.dim(), out);
}

}  // namespace detail

/// Checked metric evaluation: domain, symmetry, invertibility and index.
inline Mat metric_at(const MetricField& g, const Vec& p) {
  detail::check_domain(g, p, 0.0);
  Mat m = g.raw(p);
  detail::check_nondegenerate(m);
  if (detail::negative_eigenvalues(m) != g.signature())
    fail(ErrorCode::DegenerateMetric, "metric index differs from declared signature " + std::to_string(g.signature()));
  return m;
}

/// Christoffel symbols without checks or error estimate; used inside
/// integrators and nested differences. Prefers an analytic closed form.
inline void christoffel_fast(const MetricField& g, const Vec& p, std::span<double> out,
                             const FdOptions& opt = {}) {
  if (const auto& an = g.analytic_christoffel()) {
    (*an)(g.domain().reduce(p), out);
    return;
  }
  detail::christoffel_at_step(g, p, fd_step(p, opt.christoffel_scale), out);
}

inline std::vector<double> christoffel_fast(const MetricField& g, const Vec& p, const FdOptions& opt = {}) {
  const auto n = static_cast<std::size_t>(g.dim());
  std::vector<double> out(n * n * n);
  christoffel_fast(g, p, out, opt);
  return out;
}

/// Γ^a_bc (layout "^a_bc") with a step-halving error estimate.
inline TensorSample christoffel(const MetricField& g, const Vec& p, const FdOptions& opt = {}) {
  const double h = fd_step(p, opt.christoffel_scale);
  detail::check_domain(g, p, 2.0 * h);
  Mat m = g.raw(p);
  detail::check_nondegenerate(m);
  const auto n = static_cast<std::size_t>(g.dim());
  TensorSample ts{p, g.dim(), "^a_bc", std::vector<double>(n * n * n), 0.0};
  std::vector<double> half(n * n * n);
  detail::christoffel_at_step(g, p, h, ts.components);
  detail::christoffel_at_step(g, p, 0.5 * h, half);
  double diff = 0.0;
  for (std::size_t i = 0; i < half.size(); ++i) diff = std::max(diff, std::abs(ts.components[i] - half[i]));
  Mat ginv = m.inverse();
  double floor = 16.0 * kEps * m.cwiseAbs().maxCoeff() * ginv.cwiseAbs().maxCoeff() * static_cast<double>(n) / h;
  ts.estimated_fd_error = diff + floor;
  return ts;
}

/// Cross-check a user-supplied closed form against finite differences at
/// `n_points` random points of `box` (agreement within 10x the FD estimate).
inline bool validate_analytic_christoffel(const MetricField& g, const std::vector<Interval>& box, int n_points = 20,
                                          std::uint64_t seed = 7) {
  const auto& an = g.analytic_christoffel();
  if (!an) return true;
  std::mt19937_64 rng(seed);
  const int n = g.dim();
  for (int k = 0; k < n_points; ++k) {
    Vec p(n);
    for (int i = 0; i < n; ++i) {
      std::uniform_real_distribution<double> d(box[static_cast<std::size_t>(i)].lo, box[static_cast<std::size_t>(i)].hi);
      p(i) = d(rng);
    }
    MetricField plain(g.name(), g.domain(), g.signature(), [&g](const Vec& q, Mat& out) { out = g.raw(q); });
    TensorSample fd = christoffel(plain, p);
    std::vector<double> cf(fd.components.size());
    (*an)(g.domain().reduce(p), cf);
    for (std::size_t i = 0; i < cf.size(); ++i)
      if (std::abs(cf[i] - fd.components[i]) > 10.0 * fd.estimated_fd_error) return false;
  }
  return true;
}

enum class CausalCharacter { Timelike, Lightlike, Spacelike };

inline std::string_view to_string(CausalCharacter c) {
  switch (c) {
    case CausalCharacter::Timelike: return "timelike";
    case CausalCharacter::Lightlike: return "lightlike";
    case CausalCharacter::Spacelike: return "spacelike";
  }
  return "?";
}

inline CausalCharacter causal_character(const MetricField& g, const Vec& p, const Vec& v, double tol = 1e-10) {
  detail::require_dim(g, p);
  double norm = v.norm();
  if (!(norm > 0.0)) fail(ErrorCode::ZeroVector, "causal character of the zero vector");
  Vec w = v / norm;
  double q = w.dot(metric_at(g, p) * w);
  if (std::abs(q) <= tol) return CausalCharacter::Lightlike;
  return q < 0.0 ? CausalCharacter::Timelike : CausalCharacter::Spacelike;
}

namespace detail {

inline std::size_t ipow(std::size_t n, int r) {
  std::size_t k = 1;
  for (int i = 0; i < r; ++i) k *= n;
  return k;
}

/// R^a_bcd (layout index ((a*n+b)*n+c)*n+d), curvature step H, no checks.
inline std::vector<double> curvature_at_step(const MetricField& g, const Vec& p, double H, const FdOptions& opt) {
  const int n = g.dim();
  const auto N = static_cast<std::size_t>(n);
  const std::size_t n3 = N * N * N;
  std::vector<double> gamma = christoffel_fast(g, p, opt);
  // dGamma[c][a][d][b] = ∂_c Γ^a_db
  std::vector<double> dgamma(N * n3, 0.0);
  for (int c = 0; c < n; ++c) {
    const auto d = central_d1_components([&](int s) {
      Vec q = p;
      q(c) += s * H;
      return christoffel_fast(g, q, opt);
    });
    for (std::size_t i = 0; i < n3; ++i) dgamma[static_cast<std::size_t>(c) * n3 + i] = d[i] / H;
  }
  auto G = [&](int a, int b, int c) {
    return gamma[(static_cast<std::size_t>(a) * N + static_cast<std::size_t>(b)) * N + static_cast<std::size_t>(c)];
  };
  auto dG = [&](int c, int a, int d, int b) {
    return dgamma[static_cast<std::size_t>(c) * n3 +
                  (static_cast<std::size_t>(a) * N + static_cast<std::size_t>(d)) * N + static_cast<std::size_t>(b)];
  };
  std::vector<double> R(N * n3, 0.0);
  auto at = [&](int a, int b, int c, int d) -> double& {
    return R[((static_cast<std::size_t>(a) * N + static_cast<std::size_t>(b)) * N + static_cast<std::size_t>(c)) * N +
             static_cast<std::size_t>(d)];
  };
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = c + 1; d < n; ++d) {
          double v = dG(c, a, d, b) - dG(d, a, c, b);
          for (int e = 0; e < n; ++e) v += G(a, c, e) * G(e, d, b) - G(a, d, e) * G(e, c, b);
          at(a, b, c, d) = v;
          at(a, b, d, c) = -v;
        }
  return R;
}

/// Tensor valued field with one contravariant index at position `upper`.
using TensorFn = std::function<std::vector<double>(const Vec&)>;

/// ∇T with the new derivative index first; outer stencil step H.
inline std::vector<double> covariant_derivative(const MetricField& g, const TensorFn& T, int rank, int upper,
                                                const Vec& p, double H, const FdOptions& opt) {
  const int n = g.dim();
  const auto N = static_cast<std::size_t>(n);
  const std::size_t size = ipow(N, rank);
  std::vector<double> center = T(p);
  std::vector<double> out(N * size, 0.0);
  for (int f = 0; f < n; ++f) {
    const auto d = central_d1_components([&](int s) {
      Vec q = p;
      q(f) += s * H;
      return T(q);
    });
    for (std::size_t i = 0; i < size; ++i) out[static_cast<std::size_t>(f) * size + i] = d[i] / H;
  }
  std::vector<double> gamma = christoffel_fast(g, p, opt);
  auto G = [&](std::size_t a, std::size_t b, std::size_t c) { return gamma[(a * N + b) * N + c]; };
  std::vector<std::size_t> stride(static_cast<std::size_t>(rank));
  for (int k = 0; k < rank; ++k) stride[static_cast<std::size_t>(k)] = ipow(N, rank - 1 - k);
  std::vector<std::size_t> idx(static_cast<std::size_t>(rank));
  for (std::size_t f = 0; f < N; ++f) {
    for (std::size_t flat = 0; flat < size; ++flat) {
      std::size_t rem = flat;
      for (int k = 0; k < rank; ++k) {
        idx[static_cast<std::size_t>(k)] = rem / stride[static_cast<std::size_t>(k)];
        rem %= stride[static_cast<std::size_t>(k)];
      }
      double corr = 0.0;
      for (int k = 0; k < rank; ++k) {
        const std::size_t ik = idx[static_cast<std::size_t>(k)];
        const std::size_t base = flat - ik * stride[static_cast<std::size_t>(k)];
        for (std::size_t e = 0; e < N; ++e) {
          const double te = center[base + e * stride[static_cast<std::size_t>(k)]];
          if (k == upper) corr += G(ik, f, e) * te;
          else corr -= G(e, f, ik) * te;
        }
      }
      out[f * size + flat] += corr;
    }
  }
  return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

/// Riemann tensor R^a_bcd, antisymmetric in (c,d) by construction.
inline TensorSample curvature_tensor(const MetricField& g, const Vec& p, const FdOptions& opt = {}) {
  const double H = fd_step(p, opt.curvature_scale);
  const double h = fd_step(p, opt.christoffel_scale);
  detail::check_domain(g, p, 2.0 * H + 2.0 * h);
  Mat m = g.raw(p);
  detail::check_nondegenerate(m);
  TensorSample ts{p, g.dim(), "^a_bcd", detail::curvature_at_step(g, p, H, opt), 0.0};
  std::vector<double> half = detail::curvature_at_step(g, p, 0.5 * H, opt);
  std::vector<double> gamma = christoffel_fast(g, p, opt);
  double floor = 64.0 * kEps * m.cwiseAbs().maxCoeff() * m.inverse().cwiseAbs().maxCoeff() *
                     static_cast<double>(g.dim()) / (h * H) +
                 16.0 * kEps * detail::max_abs(gamma) * detail::max_abs(gamma) * static_cast<double>(g.dim());
  ts.estimated_fd_error = detail::max_abs_diff(ts.components, half) + floor;
  return ts;
}

/// R_abcd = g_ae R^e_bcd.
inline TensorSample lower_first_index(const MetricField& g, const TensorSample& R) {
  const auto N = static_cast<std::size_t>(R.dim);
  const std::size_t n3 = N * N * N;
  Mat m = g.raw(R.point);
  TensorSample out = R;
  out.layout = "_abcd";
  for (std::size_t a = 0; a < N; ++a)
    for (std::size_t r = 0; r < n3; ++r) {
      double acc = 0.0;
      for (std::size_t e = 0; e < N; ++e)
        acc += m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(e)) * R.components[e * n3 + r];
      out.components[a * n3 + r] = acc;
    }
  out.estimated_fd_error = R.estimated_fd_error * m.cwiseAbs().maxCoeff() * static_cast<double>(N);
  return out;
}

/// Ric_bd = R^a_bad.
inline TensorSample ricci_tensor(const MetricField& g, const Vec& p, const FdOptions& opt = {}) {
  TensorSample R = curvature_tensor(g, p, opt);
  const auto N = static_cast<std::size_t>(R.dim);
  TensorSample out{p, R.dim, "_bd", std::vector<double>(N * N, 0.0), R.estimated_fd_error * static_cast<double>(N)};
  for (std::size_t b = 0; b < N; ++b)
    for (std::size_t d = 0; d < N; ++d)
      for (std::size_t a = 0; a < N; ++a) out.components[b * N + d] += R.components[((a * N + b) * N + a) * N + d];
  return out;
}

struct DerivativeNorm {
  double value = 0.0;
  double estimated_fd_error = 0.0;
};

/// Max |component| of ∇R (r = 1) or ∇∇R (r = 2), built by covariant
/// differentiation of finite-difference curvature samples.
inline DerivativeNorm covariant_curvature_derivative_norm(const MetricField& g, const Vec& p, int r,
                                                          const FdOptions& opt = {}) {
  if (r != 1 && r != 2) fail(ErrorCode::InvalidArgument, "derivative order must be 1 or 2");
  const double h = fd_step(p, opt.christoffel_scale);
  const double Hc = fd_step(p, opt.curvature_scale);
  const double Hd = fd_step(p, opt.derivative_scale);
  detail::check_domain(g, p, 2.0 * (h + Hc + r * Hd));
  detail::check_nondegenerate(g.raw(p));

  detail::TensorFn curv = [&g, &opt](const Vec& q) {
    return detail::curvature_at_step(g, q, fd_step(q, opt.curvature_scale), opt);
  };
  std::vector<double> full, half;
  if (r == 1) {
    full = detail::covariant_derivative(g, curv, 4, 0, p, Hd, opt);
    half = detail::covariant_derivative(g, curv, 4, 0, p, 0.5 * Hd, opt);
  } else {
    detail::TensorFn dcurv = [&g, &opt, curv](const Vec& q) {
      return detail::covariant_derivative(g, curv, 4, 0, q, fd_step(q, opt.derivative_scale), opt);
    };
    full = detail::covariant_derivative(g, dcurv, 5, 1, p, Hd, opt);
    half = detail::covariant_derivative(g, dcurv, 5, 1, p, 0.5 * Hd, opt);
  }
  DerivativeNorm out;
  out.value = detail::max_abs(full);
  out.estimated_fd_error = detail::max_abs_diff(full, half) + 1e3 * kEps * (1.0 + detail::max_abs(curv(p))) / std::pow(Hd, r);
  if (out.estimated_fd_error > std::max(out.value, opt.zero_tolerance))
    fail(ErrorCode::FDUnstable, "step-halving error exceeds the derivative it estimates");
  return out;
}

// ---------------------------------------------------------------------------
// Builtin closed-form metrics.

inline MetricField euclidean_metric(int dim) {
  return MetricField("euclidean", ChartDomain(dim), 0, [](const Vec& p, Mat& g) { g = Mat::Identity(p.size(), p.size()); });
}

/// Minkowski in Cartesian coordinates (t, x1, ...).
inline MetricField minkowski_metric(int dim) {
  return MetricField("minkowski", ChartDomain(dim), 1, [](const Vec& p, Mat& g) {
    g = Mat::Identity(p.size(), p.size());
    g(0, 0) = -1.0;
  });
}

/// g = 2 dx dy + tau(x) dy^2 on the unit torus; tau is an expression in x1.
inline MetricField torus_lorentz_metric(const expr::Expression& tau) {
  ChartDomain dom(2, {}, {1.0, 1.0});
  return MetricField("torus-lorentz", dom, 1,
                     [tau, dom](const Vec& p, Mat& g) {
                       g.resize(2, 2);
                       g(0, 0) = 0.0;
                       g(0, 1) = g(1, 0) = 1.0;
                       g(1, 1) = tau(dom.slots_for(p));
                     },
                     Smoothness::AnalyticExpression);
}

/// g = 2 du dv on u > 0.
inline MetricField half_plane_metric() {
  ChartDomain dom(2, {Interval{0.0, kInf}, Interval{}}, {}, {expr::kSlotU, expr::kSlotV});
  return MetricField("half-plane", dom, 1, [](const Vec&, Mat& g) {
    g.resize(2, 2);
    g << 0.0, 1.0, 1.0, 0.0;
  });
}

/// Metric from a symmetric matrix of expressions over the chart's variables.
inline MetricField metric_from_expressions(std::string name, ChartDomain dom, int signature,
                                           std::vector<std::vector<expr::Expression>> comps) {
  const auto n = static_cast<std::size_t>(dom.dim());
  if (comps.size() != n) fail(ErrorCode::BadDimension, "metric component rows do not match dimension");
  for (const auto& row : comps)
    if (row.size() != n) fail(ErrorCode::BadDimension, "metric component columns do not match dimension");
  return MetricField(std::move(name), dom, signature,
                     [comps = std::move(comps), dom](const Vec& p, Mat& g) {
                       const auto s = dom.slots_for(p);
                       const int n = dom.dim();
                       g.resize(n, n);
                       for (int i = 0; i < n; ++i)
                         for (int j = 0; j < n; ++j)
                           g(i, j) = comps[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](s);
                     },
                     Smoothness::AnalyticExpression);
}

}  // namespace cplab
