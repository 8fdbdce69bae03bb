#pragma once

// Scenario configs, the builtin scenario list, orchestration and report
// emission. A config is a JSON document with expressions as DSL strings.

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cplab/error.hpp"
#include "cplab/expr.hpp"
#include "cplab/geom.hpp"
#include "cplab/growth.hpp"
#include "cplab/mechanics.hpp"
#include "cplab/ode.hpp"
#include "cplab/waves.hpp"

namespace cplab::scenario {

using json = nlohmann::ordered_json;

inline constexpr const char* kFormat = "completeness-lab/1";

enum class Verdict { CertifiedComplete, NumericallyCompleteToHorizon, NumericallyIncomplete, Inconclusive };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::CertifiedComplete: return "certified-complete";
    case Verdict::NumericallyCompleteToHorizon: return "numerically-complete-to-horizon";
    case Verdict::NumericallyIncomplete: return "numerically-incomplete";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

/// Config error carrying a JSON-pointer path to the offending field.
class ConfigFailure : public Error {
 public:
  ConfigFailure(std::string path, const std::string& msg)
      : Error(ErrorCode::ConfigError, (path.empty() ? std::string("/") : path) + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

[[noreturn]] inline void config_fail(const std::string& path, const std::string& msg) { throw ConfigFailure(path, msg); }

struct InitialCondition {
  Vec x;
  Vec v;
  double t0 = 0.0;
};

struct RunSettings {
  double horizon = 100.0;
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  std::size_t samples = 2000;
  double speed_limit = 1e12;
};

struct CheckSpec {
  std::string kind;
  json params;
  std::string path;
};

struct Manifold {
  std::string kind;
  MetricField g;
  std::optional<waves::PpWaveSpec> ppwave;
};

struct ScenarioConfig {
  std::string name;
  std::string description;
  json source;
  Manifold manifold;
  std::optional<mech::ProblemExpressions> problem;
  expr::FunctionTable functions;
  std::vector<InitialCondition> initial_conditions;
  RunSettings run;
  std::vector<CheckSpec> checks;

  bool has_check(std::string_view kind) const {
    return std::any_of(checks.begin(), checks.end(), [&](const CheckSpec& c) { return c.kind == kind; });
  }
};

// ---------------------------------------------------------------------------
// Reading helpers.

namespace detail {

inline std::string child(const std::string& path, std::string_view key) {
  std::string k;
  for (char c : key) {
    if (c == '~')
      k += "~0";
    else if (c == '/')
      k += "~1";
    else
      k += c;
  }
  return path + "/" + k;
}
inline std::string child(const std::string& path, std::size_t i) { return path + "/" + std::to_string(i); }

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) config_fail(path, "expected an object");
}

inline void allowed_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> keys) {
  for (const auto& [k, _] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) config_fail(child(path, k), "unknown field");
}

inline const json& field(const json& j, std::string_view key, const std::string& path) {
  if (!j.contains(key)) config_fail(child(path, key), "missing required field");
  return j.at(std::string(key));
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_fail(path, "expected a finite number");
  return v;
}

inline double number_or(const json& j, std::string_view key, double dflt, const std::string& path) {
  return j.contains(key) ? number(j.at(std::string(key)), child(path, key)) : dflt;
}

inline int integer_or(const json& j, std::string_view key, int dflt, const std::string& path) {
  if (!j.contains(key)) return dflt;
  const auto& v = j.at(std::string(key));
  if (!v.is_number_integer()) config_fail(child(path, key), "expected an integer");
  return v.get<int>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) config_fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::string text_or(const json& j, std::string_view key, std::string dflt, const std::string& path) {
  return j.contains(key) ? text(j.at(std::string(key)), child(path, key)) : dflt;
}

inline Vec vector_of(const json& j, const std::string& path, std::optional<std::size_t> size = std::nullopt) {
  if (!j.is_array()) config_fail(path, "expected an array of numbers");
  if (size && j.size() != *size)
    config_fail(path, "expected " + std::to_string(*size) + " entries, got " + std::to_string(j.size()));
  if (j.size() > static_cast<std::size_t>(kMaxDim)) config_fail(path, "too many entries");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], child(path, i));
  return v;
}

/// Parse and bind an expression, restricting its variables to `allowed`.
inline expr::Expression expression(const json& j, const std::string& path, const expr::FunctionTable& ft,
                                   const std::vector<std::size_t>& allowed) {
  const std::string src = text(j, path);
  expr::Expression e;
  try {
    e = expr::Expression(src, ft);
  } catch (const Error& err) {
    config_fail(path, std::string(to_string(err.code())) + ": " + err.what());
  }
  for (std::size_t s = 0; s < expr::kNumSlots; ++s)
    if (e.compiled().uses_slot(s) && std::find(allowed.begin(), allowed.end(), s) == allowed.end())
      config_fail(path, "expression uses a variable that is not available here");
  return e;
}

inline std::vector<std::size_t> with_time(std::vector<std::size_t> slots) {
  slots.push_back(expr::kSlotT);
  return slots;
}

inline std::vector<std::vector<std::string>> string_matrix(const json& j, const std::string& path, std::size_t n) {
  if (!j.is_array() || j.size() != n) config_fail(path, "expected " + std::to_string(n) + " rows");
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = child(path, i);
    if (!j[i].is_array() || j[i].size() != n) config_fail(p, "expected " + std::to_string(n) + " entries");
    std::vector<std::string> row;
    for (std::size_t k = 0; k < n; ++k) row.push_back(text(j[i][k], child(p, k)));
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<std::vector<expr::Expression>> expression_matrix(const json& j, const std::string& path,
                                                                    std::size_t n, const expr::FunctionTable& ft,
                                                                    const std::vector<std::size_t>& allowed) {
  const auto src = string_matrix(j, path, n);
  std::vector<std::vector<expr::Expression>> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      out[i].push_back(expression(j[i][k], child(child(path, i), k), ft, allowed));
      if (k < i && expr::parse(src[i][k]) != expr::parse(src[k][i]))
        config_fail(child(child(path, i), k), "matrix must be symmetric");
    }
  return out;
}

inline std::vector<std::size_t> x_slots(std::size_t n) {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(expr::kSlotX1 + i);
  return s;
}

/// Run `fn` on a fresh MetricField construction, mapping module errors to a
/// config error at `path`.
template <class F>
auto build_at(const std::string& path, F&& fn) {
  try {
    return fn();
  } catch (const ConfigFailure&) {
    throw;
  } catch (const Error& e) {
    config_fail(path, std::string(to_string(e.code())) + ": " + e.what());
  }
}

inline expr::FunctionTable parse_functions(const json& j, const std::string& path) {
  require_object(j, path);
  expr::FunctionTable ft;
  for (const auto& [name, def] : j.items()) {
    const auto p = child(path, name);
    require_object(def, p);
    allowed_keys(def, p, {"params", "body"});
    expr::UserFunction f;
    const auto& params = field(def, "params", p);
    if (!params.is_array()) config_fail(child(p, "params"), "expected an array of names");
    for (std::size_t i = 0; i < params.size(); ++i) f.params.push_back(text(params[i], child(child(p, "params"), i)));
    try {
      f.body = expr::parse(text(field(def, "body", p), child(p, "body")));
    } catch (const Error& e) {
      config_fail(child(p, "body"), e.what());
    }
    ft[name] = std::move(f);
  }
  return ft;
}

inline Manifold parse_manifold(const json& j, const expr::FunctionTable& ft, const std::string& path) {
  require_object(j, path);
  Manifold m;
  if (!j.contains("builtin")) {
    allowed_keys(j, path, {"dim", "signature", "metric", "bounds", "periods", "name"});
    const int dim = integer_or(j, "dim", 0, path);
    if (dim < 2 || dim > kMaxDim) config_fail(child(path, "dim"), "dimension must be in [2, 8]");
    const auto n = static_cast<std::size_t>(dim);
    const int sig = integer_or(j, "signature", 0, path);
    if (sig < 0 || sig > dim) config_fail(child(path, "signature"), "signature must be in [0, dim]");
    std::vector<Interval> bounds(n);
    if (j.contains("bounds")) {
      const auto& b = j.at("bounds");
      const auto p = child(path, "bounds");
      if (!b.is_array() || b.size() != n) config_fail(p, "expected one entry per coordinate");
      for (std::size_t i = 0; i < n; ++i) {
        if (b[i].is_null()) continue;
        if (!b[i].is_array() || b[i].size() != 2) config_fail(child(p, i), "expected [lo, hi] or null");
        for (std::size_t k = 0; k < 2; ++k)
          if (!b[i][k].is_null()) (k ? bounds[i].hi : bounds[i].lo) = number(b[i][k], child(child(p, i), k));
      }
    }
    std::vector<std::optional<double>> periods(n);
    if (j.contains("periods")) {
      const auto& q = j.at("periods");
      const auto p = child(path, "periods");
      if (!q.is_array() || q.size() != n) config_fail(p, "expected one entry per coordinate");
      for (std::size_t i = 0; i < n; ++i)
        if (!q[i].is_null()) periods[i] = number(q[i], child(p, i));
    }
    const auto comps = expression_matrix(field(j, "metric", path), child(path, "metric"), n, ft, x_slots(n));
    m.kind = "custom";
    m.g = build_at(path, [&] {
      return metric_from_expressions(text_or(j, "name", "custom", path), ChartDomain(dim, bounds, periods), sig, comps);
    });
    return m;
  }
  const std::string kind = text(j.at("builtin"), child(path, "builtin"));
  m.kind = kind;
  if (kind == "euclidean" || kind == "minkowski") {
    allowed_keys(j, path, {"builtin", "dim"});
    const int dim = integer_or(j, "dim", kind == "euclidean" ? 2 : 4, path);
    m.g = build_at(child(path, "dim"), [&] { return kind == "euclidean" ? euclidean_metric(dim) : minkowski_metric(dim); });
  } else if (kind == "torus-lorentz") {
    allowed_keys(j, path, {"builtin", "tau"});
    const json tau = j.contains("tau") ? j.at("tau") : json("sin(2*pi*x1)");
    m.g = torus_lorentz_metric(expression(tau, child(path, "tau"), ft, {expr::kSlotX1}));
  } else if (kind == "half-plane") {
    allowed_keys(j, path, {"builtin"});
    m.g = half_plane_metric();
  } else if (kind == "pp-wave") {
    allowed_keys(j, path, {"builtin", "dim", "H", "transverse"});
    waves::PpWaveSpec spec;
    spec.n = integer_or(j, "dim", 4, path);
    if (spec.n < 3 || spec.n > kMaxDim) config_fail(child(path, "dim"), "pp-wave dimension must be in [3, 8]");
    const auto k = static_cast<std::size_t>(spec.n - 2);
    auto allowed = x_slots(k);
    allowed.push_back(expr::kSlotU);
    spec.H = expression(field(j, "H", path), child(path, "H"), ft, allowed);
    if (j.contains("transverse")) {
      const auto comps = expression_matrix(j.at("transverse"), child(path, "transverse"), k, ft, x_slots(k));
      spec.transverse = build_at(child(path, "transverse"), [&] {
        return metric_from_expressions("transverse", ChartDomain(static_cast<int>(k)), 0, comps);
      });
    }
    m.g = build_at(path, [&] { return waves::build_ppwave(spec); });
    m.ppwave = spec;
  } else if (kind == "plane-wave") {
    allowed_keys(j, path, {"builtin", "profile", "A"});
    waves::PlaneWaveProfile prof;
    if (j.contains("profile") == j.contains("A")) config_fail(path, "give exactly one of profile or A");
    if (j.contains("profile")) {
      const auto& p = j.at("profile");
      const auto pp = child(path, "profile");
      require_object(p, pp);
      allowed_keys(p, pp, {"a", "b", "c"});
      std::array<std::string, 3> abc{"0", "0", "0"};
      const char* names[3] = {"a", "b", "c"};
      for (std::size_t i = 0; i < 3; ++i)
        if (p.contains(names[i])) {
          expression(p.at(names[i]), child(pp, names[i]), ft, {expr::kSlotU});
          abc[i] = p.at(names[i]).get<std::string>();
        }
      prof = waves::PlaneWaveProfile::polarization(abc[0], abc[1], abc[2]);
    } else {
      const auto& A = j.at("A");
      const auto pa = child(path, "A");
      if (!A.is_array() || A.empty() || A.size() > static_cast<std::size_t>(kMaxDim - 2))
        config_fail(pa, "expected a square matrix with 1 to 6 rows");
      const auto src = string_matrix(A, pa, A.size());
      expression_matrix(A, pa, A.size(), ft, {expr::kSlotU});
      prof = waves::PlaneWaveProfile::matrix(src);
    }
    auto spec = build_at(path, [&] { return waves::plane_wave_spec(prof); });
    m.g = build_at(path, [&] { return waves::build_ppwave(spec); });
    m.ppwave = spec;
  } else {
    config_fail(child(path, "builtin"),
                "unknown metric '" + kind + "'; available: euclidean, minkowski, torus-lorentz, half-plane, pp-wave, plane-wave");
  }
  return m;
}

inline void validate_check(const CheckSpec& c, const ScenarioConfig& cfg) {
  const auto& p = c.params;
  const auto& path = c.path;
  const auto n = static_cast<std::size_t>(cfg.manifold.g.dim());
  const auto& slots = cfg.manifold.g.domain().slots();
  auto field_exprs = [&](std::string_view key) {
    const auto& f = field(p, key, path);
    if (!f.is_array() || f.size() != n) config_fail(child(path, key), "expected one expression per coordinate");
    for (std::size_t i = 0; i < n; ++i) expression(f[i], child(child(path, key), i), cfg.functions, slots);
  };
  auto points = [&](bool required) {
    if (!p.contains("points")) {
      if (required) config_fail(child(path, "points"), "missing required field");
      return;
    }
    const auto& pts = p.at("points");
    if (!pts.is_array() || pts.empty()) config_fail(child(path, "points"), "expected a nonempty array of points");
    for (std::size_t i = 0; i < pts.size(); ++i) vector_of(pts[i], child(child(path, "points"), i), n);
  };
  if (c.kind == "hypotheses") {
    allowed_keys(p, path, {"kind", "region", "b", "n_samples", "time_points", "alternative"});
    if (!cfg.problem) config_fail(path, "hypotheses need a problem block");
    if (cfg.manifold.g.signature() != 0) config_fail(path, "hypotheses need a Riemannian metric");
    const auto& r = field(p, "region", path);
    const auto rp = child(path, "region");
    require_object(r, rp);
    allowed_keys(r, rp, {"center", "radius"});
    if (r.contains("center")) vector_of(r.at("center"), child(rp, "center"), n);
    if (!(number(field(r, "radius", rp), child(rp, "radius")) > 0.0)) config_fail(child(rp, "radius"), "must be positive");
    if (!(number(field(p, "b", path), child(path, "b")) > 0.0)) config_fail(child(path, "b"), "must be positive");
    if (integer_or(p, "n_samples", 2000, path) < 1000) config_fail(child(path, "n_samples"), "need at least 1000 samples");
    if (integer_or(p, "time_points", 9, path) < 2) config_fail(child(path, "time_points"), "need at least 2");
    if (p.contains("alternative") && !p.at("alternative").is_boolean())
      config_fail(child(path, "alternative"), "expected a boolean");
  } else if (c.kind == "bound-chain") {
    allowed_keys(p, path, {"kind"});
    if (!cfg.has_check("hypotheses")) config_fail(path, "bound-chain needs a hypotheses check");
  } else if (c.kind == "energy") {
    allowed_keys(p, path, {"kind", "threshold"});
    if (!cfg.problem) config_fail(path, "energy check needs a problem block");
  } else if (c.kind == "killing") {
    allowed_keys(p, path, {"kind", "field", "threshold"});
    field_exprs("field");
  } else if (c.kind == "reduction") {
    allowed_keys(p, path, {"kind", "threshold"});
    if (!cfg.manifold.ppwave) config_fail(path, "reduction needs a pp-wave or plane-wave manifold");
    if (cfg.problem) config_fail(path, "reduction applies to geodesics; remove the problem block");
  } else if (c.kind == "curvature-condition") {
    allowed_keys(p, path, {"kind", "field", "points"});
    field_exprs("field");
    points(true);
  } else if (c.kind == "covariant-derivatives") {
    allowed_keys(p, path, {"kind", "points"});
    points(true);
  } else if (c.kind == "growth") {
    allowed_keys(p, path, {"kind", "alpha", "tag", "x_max"});
    expression(field(p, "alpha", path), child(path, "alpha"), cfg.functions, {expr::kSlotX1});
    if (number_or(p, "x_max", 1000.0, path) < 100.0) config_fail(child(path, "x_max"), "x_max must be at least 100");
  } else {
    config_fail(child(path, "kind"),
                "unknown check '" + c.kind +
                    "'; available: hypotheses, bound-chain, energy, killing, reduction, curvature-condition, "
                    "covariant-derivatives, growth");
  }
}

inline growth::AsymptoticTag parse_tag(const std::string& s, const std::string& path) {
  if (s.empty() || s == "untagged") return growth::AsymptoticTag::untagged();
  if (s == "affine") return growth::AsymptoticTag::affine();
  if (s == "divergent") return growth::AsymptoticTag::divergent();
  if (s == "convergent") return growth::AsymptoticTag::convergent();
  auto arg = [&](std::string_view prefix) -> std::optional<double> {
    if (s.rfind(prefix, 0) != 0 || s.back() != ')') return std::nullopt;
    const std::string inner = s.substr(prefix.size(), s.size() - prefix.size() - 1);
    char* end = nullptr;
    const double v = std::strtod(inner.c_str(), &end);
    if (inner.empty() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
    return v;
  };
  if (auto d = arg("poly(")) return growth::AsymptoticTag::poly(*d);
  if (auto k = arg("x_log_iterates(")) {
    if (*k < 1 || *k != std::floor(*k)) config_fail(path, "iterate count must be a positive integer");
    return growth::AsymptoticTag::x_log_iterates(static_cast<int>(*k));
  }
  config_fail(path, "unknown tag '" + s + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config parsing.

inline ScenarioConfig parse_config(const json& doc) {
  using namespace detail;
  require_object(doc, "");
  allowed_keys(doc, "", {"name", "description", "functions", "manifold", "problem", "initial_conditions", "run", "checks"});
  ScenarioConfig cfg;
  cfg.source = doc;
  cfg.name = text_or(doc, "name", "unnamed", "");
  cfg.description = text_or(doc, "description", "", "");
  if (doc.contains("functions")) cfg.functions = parse_functions(doc.at("functions"), "/functions");
  cfg.manifold = parse_manifold(field(doc, "manifold", ""), cfg.functions, "/manifold");
  const auto n = static_cast<std::size_t>(cfg.manifold.g.dim());
  const auto& slots = cfg.manifold.g.domain().slots();

  if (doc.contains("problem")) {
    const auto& p = doc.at("problem");
    require_object(p, "/problem");
    allowed_keys(p, "/problem", {"E", "R", "V", "dV_dt"});
    mech::ProblemExpressions src;
    const auto allowed = with_time(slots);
    if (p.contains("E")) {
      src.E = string_matrix(p.at("E"), "/problem/E", n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
          expression(p.at("E")[i][k], child(child("/problem/E", i), k), cfg.functions, allowed);
    }
    if (p.contains("R")) {
      const auto& R = p.at("R");
      if (!R.is_array() || R.size() != n) config_fail("/problem/R", "expected one expression per coordinate");
      for (std::size_t i = 0; i < n; ++i) {
        expression(R[i], child("/problem/R", i), cfg.functions, allowed);
        src.R.push_back(R[i].get<std::string>());
      }
    }
    if (p.contains("V")) {
      expression(p.at("V"), "/problem/V", cfg.functions, allowed);
      src.V = p.at("V").get<std::string>();
    }
    if (p.contains("dV_dt")) {
      if (!p.contains("V")) config_fail("/problem/dV_dt", "dV_dt given without V");
      expression(p.at("dV_dt"), "/problem/dV_dt", cfg.functions, allowed);
      src.dV_dt = p.at("dV_dt").get<std::string>();
    }
    cfg.problem = src;
  }

  const auto& ics = field(doc, "initial_conditions", "");
  if (!ics.is_array()) config_fail("/initial_conditions", "expected an array");
  if (ics.empty()) config_fail("/initial_conditions", "at least one initial condition is required");
  for (std::size_t i = 0; i < ics.size(); ++i) {
    const auto p = child("/initial_conditions", i);
    require_object(ics[i], p);
    allowed_keys(ics[i], p, {"x", "v", "t0"});
    InitialCondition ic;
    ic.x = vector_of(field(ics[i], "x", p), child(p, "x"), n);
    ic.v = vector_of(field(ics[i], "v", p), child(p, "v"), n);
    ic.t0 = number_or(ics[i], "t0", 0.0, p);
    if (!cfg.manifold.g.domain().contains(ic.x)) config_fail(child(p, "x"), "initial point lies outside the chart");
    cfg.initial_conditions.push_back(ic);
  }

  if (doc.contains("run")) {
    const auto& r = doc.at("run");
    require_object(r, "/run");
    allowed_keys(r, "/run", {"horizon", "rel_tol", "abs_tol", "samples", "speed_limit"});
    cfg.run.horizon = number_or(r, "horizon", cfg.run.horizon, "/run");
    cfg.run.rel_tol = number_or(r, "rel_tol", cfg.run.rel_tol, "/run");
    cfg.run.abs_tol = number_or(r, "abs_tol", cfg.run.abs_tol, "/run");
    cfg.run.speed_limit = number_or(r, "speed_limit", cfg.run.speed_limit, "/run");
    const int s = integer_or(r, "samples", static_cast<int>(cfg.run.samples), "/run");
    if (s < 10 || s > 1'000'000) config_fail("/run/samples", "samples must be in [10, 1000000]");
    cfg.run.samples = static_cast<std::size_t>(s);
  }
  if (!(cfg.run.horizon > 0.0)) config_fail("/run/horizon", "horizon must be positive");
  if (!(cfg.run.rel_tol >= 1e-14 && cfg.run.rel_tol <= 1e-2)) config_fail("/run/rel_tol", "rel_tol must be in [1e-14, 1e-2]");
  if (!(cfg.run.abs_tol >= 1e-14 && cfg.run.abs_tol <= 1e-2)) config_fail("/run/abs_tol", "abs_tol must be in [1e-14, 1e-2]");
  if (!(cfg.run.speed_limit > 0.0)) config_fail("/run/speed_limit", "speed_limit must be positive");

  if (doc.contains("checks")) {
    const auto& cs = doc.at("checks");
    if (!cs.is_array()) config_fail("/checks", "expected an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const auto p = child("/checks", i);
      require_object(cs[i], p);
      cfg.checks.push_back({text(field(cs[i], "kind", p), child(p, "kind")), cs[i], p});
    }
    for (const auto& c : cfg.checks) validate_check(c, cfg);
  }
  return cfg;
}

inline json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) config_fail("", "cannot open config file " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    config_fail("", std::string("malformed JSON: ") + e.what());
  }
}

/// Command-line overrides for the run block.
inline void apply_overrides(ScenarioConfig& cfg, std::optional<double> horizon, std::optional<double> rel_tol) {
  if (horizon) {
    if (!(*horizon > 0.0) || !std::isfinite(*horizon)) config_fail("/run/horizon", "horizon must be positive");
    cfg.run.horizon = *horizon;
    cfg.source["run"]["horizon"] = *horizon;
  }
  if (rel_tol) {
    if (!(*rel_tol >= 1e-14 && *rel_tol <= 1e-2)) config_fail("/run/rel_tol", "rel_tol must be in [1e-14, 1e-2]");
    cfg.run.rel_tol = *rel_tol;
    cfg.source["run"]["rel_tol"] = *rel_tol;
  }
}

// ---------------------------------------------------------------------------
// Builtin scenarios.

struct ScenarioInfo {
  std::string name;
  std::string description;
};

inline const std::vector<ScenarioInfo>& list_scenarios() {
  static const std::vector<ScenarioInfo> list{
      {"torus-incomplete-lightlike", "compact Lorentzian torus with a lightlike geodesic escaping at t = 1/pi"},
      {"half-plane-homogeneous", "flat half-plane 2 du dv on u > 0; geodesics leave through the boundary"},
      {"plane-wave-gravitational-4d", "vacuum 4D plane wave with bounded polarizations; complete to the horizon"},
      {"ppwave-quartic-incomplete", "pp-wave with H = x^4; geodesic escapes in finite affine parameter"},
      {"theorem1-quadratic-potential", "Euclidean plane, V = -x1^2; growth hypotheses certify completeness"},
      {"theorem1-quartic-violation", "Euclidean plane, V = -x1^4; quadratic bound fails and the trajectory escapes"},
      {"second-symmetric-plane-wave", "plane wave with profile linear in u; second covariant derivative of R vanishes"},
      {"theorem1-nonautonomous-potential", "Euclidean plane, V = -t x1^2; certified on a finite time window"},
  };
  return list;
}

inline json builtin_scenario(std::string_view name) {
  auto ic = [](std::vector<double> x, std::vector<double> v) { return json{{"x", x}, {"v", v}, {"t0", 0.0}}; };
  auto run = [](double horizon) {
    return json{{"horizon", horizon}, {"rel_tol", 1e-10}, {"abs_tol", 1e-12}, {"samples", 2000}};
  };
  json doc;
  doc["name"] = std::string(name);
  for (const auto& s : list_scenarios())
    if (s.name == name) doc["description"] = s.description;
  if (name == "torus-incomplete-lightlike") {
    doc["manifold"] = {{"builtin", "torus-lorentz"}, {"tau", "sin(2*pi*x1)"}};
    doc["initial_conditions"] = json::array({ic({0.0, 0.0}, {0.0, 1.0})});
    doc["run"] = run(2.0);
    doc["checks"] = json::array({
        {{"kind", "killing"}, {"field", {"0", "1"}}},
        {{"kind", "curvature-condition"}, {"field", {"0", "1"}}, {"points", {{0.25, 0.0}, {0.6, 0.3}}}},
    });
  } else if (name == "half-plane-homogeneous") {
    doc["manifold"] = {{"builtin", "half-plane"}};
    doc["initial_conditions"] = json::array({ic({1.0, 0.0}, {-1.0, 0.5}), ic({1.0, 0.0}, {0.5, -0.25})});
    doc["run"] = run(10.0);
    doc["checks"] = json::array({{{"kind", "killing"}, {"field", {"1", "0"}}}});
  } else if (name == "plane-wave-gravitational-4d") {
    doc["manifold"] = {{"builtin", "plane-wave"},
                       {"profile", {{"a", "0.05*sin(u)"}, {"b", "0.04*cos(0.7*u)"}, {"c", "0"}}}};
    doc["initial_conditions"] =
        json::array({ic({0.0, 0.0, 0.1, 0.2}, {1.0, 0.3, 0.05, -0.02}), ic({0.0, 1.0, -0.5, 0.4}, {2.0, 0.0, 0.1, 0.1})});
    doc["run"] = run(100.0);
    doc["checks"] = json::array({
        {{"kind", "killing"}, {"field", {"0", "1", "0", "0"}}},
        {{"kind", "reduction"}},
        {{"kind", "curvature-condition"}, {"field", {"0", "1", "0", "0"}}, {"points", {{0.3, 0.0, 0.2, -0.1}, {1.2, 0.5, -0.4, 0.3}}}},
    });
  } else if (name == "ppwave-quartic-incomplete") {
    doc["manifold"] = {{"builtin", "pp-wave"}, {"dim", 3}, {"H", "x1^4"}};
    // Null initial velocity: g(v, v) = -2 v_u v_v + H v_u^2 = 0.
    doc["initial_conditions"] = json::array({ic({0.0, 0.0, 1.0}, {1.0, 0.5, 0.0})});
    doc["run"] = run(5.0);
    doc["checks"] = json::array({
        {{"kind", "killing"}, {"field", {"0", "1", "0"}}},
        {{"kind", "reduction"}},
    });
  } else if (name == "theorem1-quadratic-potential" || name == "theorem1-quartic-violation" ||
             name == "theorem1-nonautonomous-potential") {
    doc["manifold"] = {{"builtin", "euclidean"}, {"dim", 2}};
    if (name == "theorem1-quadratic-potential")
      doc["problem"] = {{"V", "-x1^2"}};
    else if (name == "theorem1-quartic-violation")
      doc["problem"] = {{"V", "-x1^4"}};
    else
      doc["problem"] = {{"V", "-t*x1^2"}, {"dV_dt", "-x1^2"}};
    doc["initial_conditions"] = json::array({ic({1.0, 0.0}, {0.0, 1.0})});
    doc["run"] = run(2.0);
    doc["checks"] = json::array({
        {{"kind", "hypotheses"}, {"region", {{"center", {1.0, 0.0}}, {"radius", 10.0}}}, {"b", 2.0}, {"n_samples", 2000}},
        {{"kind", "bound-chain"}},
    });
    // The absolute energy residual grows with u near an escape, so it is
    // only requested where the trajectory stays bounded.
    if (name != "theorem1-quartic-violation") doc["checks"].push_back({{"kind", "energy"}});
    if (name == "theorem1-quadratic-potential")
      doc["checks"].push_back({{"kind", "growth"}, {"alpha", "1+x1"}, {"tag", "affine"}, {"x_max", 1000}});
  } else if (name == "second-symmetric-plane-wave") {
    doc["manifold"] = {{"builtin", "plane-wave"}, {"profile", {{"a", "0.01*u"}, {"b", "0.02*u"}, {"c", "0"}}}};
    doc["initial_conditions"] = json::array({ic({0.0, 0.0, 0.3, -0.2}, {1.0, 0.00125, 0.0, 0.05})});
    doc["run"] = run(20.0);
    doc["checks"] = json::array({
        {{"kind", "covariant-derivatives"}, {"points", {{0.5, 0.0, 1.0, 0.5}, {-1.0, 0.3, 0.5, -1.0}}}},
        {{"kind", "killing"}, {"field", {"0", "1", "0", "0"}}},
        {{"kind", "reduction"}},
    });
  } else {
    std::string names;
    for (const auto& s : list_scenarios()) names += (names.empty() ? "" : ", ") + s.name;
    fail(ErrorCode::UnknownScenario, "unknown scenario '" + std::string(name) + "'; available: " + names);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Orchestration.

/// Worker count from COMPLETENESS_LAB_THREADS, else the hardware count.
inline unsigned worker_count() {
  if (const char* env = std::getenv("COMPLETENESS_LAB_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) config_fail("", "COMPLETENESS_LAB_THREADS must be an integer >= 1");
    return static_cast<unsigned>(std::min<long>(v, 256));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(0..n-1) on up to `threads` workers. Results must be written by
/// index; the first exception is rethrown after all workers finish.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned w = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < w; ++k)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct RunOutput {
  json report;
  json meta;
  std::vector<std::pair<std::string, std::string>> csv;  // file name, contents
  bool numeric_failure = false;
};

namespace detail {

inline json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json error_json(const Error& e) { return json{{"code", to_string(e.code())}, {"message", e.what()}}; }

inline json certificate_json(const growth::GrowthCertificate& c) {
  json consts = json::object();
  for (const auto& [k, v] : c.constants) consts[k] = v;
  return json{{"kind", growth::to_string(c.kind)}, {"constants", consts}, {"region", c.region},
              {"proxy", c.proxy},                  {"margin", c.margin},  {"n_samples", c.n_samples}};
}

inline json failure_json(const growth::FitFailure& f) {
  return json{{"worst_point", vec_json(f.worst_point)}, {"gauge", f.gauge}, {"abscissa", f.abscissa}, {"reason", f.reason}};
}

inline json status(bool passed) { return passed ? "passed" : "failed"; }

inline std::vector<Vec> points_of(const json& j, std::size_t n) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vector_of(j[i], "", n));
  return out;
}

inline waves::VectorField field_of(const json& j, const ScenarioConfig& cfg) {
  std::vector<expr::Expression> comps;
  for (const auto& s : j) comps.emplace_back(s.get<std::string>(), cfg.functions);
  const ChartDomain dom = cfg.manifold.g.domain();
  return [comps, dom](const Vec& p) {
    const auto s = dom.slots_for(p);
    Vec out(static_cast<Eigen::Index>(comps.size()));
    for (std::size_t i = 0; i < comps.size(); ++i) out(static_cast<Eigen::Index>(i)) = comps[i](s);
    return out;
  };
}

struct GlobalResult {
  json entry;
  std::optional<mech::HypothesisReport> hypotheses;
  std::optional<std::pair<Vec, double>> ball;
  double b = 0.0;
};

inline GlobalResult run_global_check(const CheckSpec& c, const ScenarioConfig& cfg, const mech::TrajectoryProblem* prob) {
  GlobalResult out;
  json e{{"kind", c.kind}};
  const auto n = static_cast<std::size_t>(cfg.manifold.g.dim());
  const auto& p = c.params;
  try {
    if (c.kind == "hypotheses") {
      const auto& r = p.at("region");
      const Vec center = r.contains("center") ? vector_of(r.at("center"), "", n) : cfg.initial_conditions.front().x;
      const double radius = r.at("radius").get<double>();
      mech::HypothesisOptions opt;
      opt.n_samples = static_cast<std::size_t>(integer_or(p, "n_samples", 2000, ""));
      opt.time_points = integer_or(p, "time_points", 9, "");
      opt.alternative_mode = p.value("alternative", false);
      out.b = p.at("b").get<double>();
      out.ball = std::pair{center, radius};
      const double t0 = cfg.initial_conditions.front().t0;
      auto rep = mech::verify_theorem1_hypotheses(*prob, growth::ball_region(center, radius), out.b, opt, t0);
      e["status"] = status(rep.all_passed());
      e["t0"] = t0;
      e["b"] = out.b;
      e["region"] = {{"center", vec_json(center)}, {"radius", radius}};
      e["failing"] = rep.failing ? json(*rep.failing) : json(nullptr);
      json hs = json::array();
      for (const auto& h : rep.hypotheses)
        hs.push_back({{"name", h.name},
                      {"passed", h.passed},
                      {"certificate", h.certificate ? certificate_json(*h.certificate) : json(nullptr)},
                      {"failure", h.failure ? failure_json(*h.failure) : json(nullptr)}});
      e["hypotheses"] = hs;
      if (rep.alternative) {
        const auto& a = *rep.alternative;
        e["alternative"] = {{"passed", a.passed}, {"K0", a.K0}, {"K1", a.K1}, {"C_S", a.C_S},
                            {"C_R", a.C_R},       {"C", a.C},   {"B", a.B},   {"note", a.note}};
      }
      out.hypotheses = std::move(rep);
    } else if (c.kind == "growth") {
      const auto alpha = growth::BoundingFunction::from_expression(
          p.at("alpha").get<std::string>(), parse_tag(p.value("tag", std::string{}), c.path + "/tag"),
          p.value("x_max", 1000.0));
      const auto cl = growth::classify_primarily_complete(alpha, p.value("x_max", 1000.0));
      e["status"] = "passed";
      e["alpha"] = alpha.source();
      e["tag"] = alpha.tag().to_string();
      e["verdict"] = growth::to_string(cl.verdict);
      e["partial_integral"] = cl.partial_integral;
      e["loglog_slope"] = cl.loglog_slope;
      e["decided_by"] = cl.decided_by;
      e["note"] = cl.note;
    } else if (c.kind == "curvature-condition") {
      const auto rep = waves::check_pp_curvature_condition(cfg.manifold.g, field_of(p.at("field"), cfg),
                                                           points_of(p.at("points"), n));
      e["status"] = status(rep.passes());
      e["max_abs"] = rep.max_abs;
      e["max_error_estimate"] = rep.max_error_estimate;
      json pts = json::array();
      for (const auto& q : rep.points)
        pts.push_back({{"point", vec_json(q.point)},
                       {"max_abs", q.max_abs},
                       {"error_estimate", q.error_estimate},
                       {"complement_basis_size", q.basis_size},
                       {"field_lightlike", q.field_lightlike},
                       {"parallel_defect", q.parallel_defect}});
      e["points"] = pts;
    } else if (c.kind == "covariant-derivatives") {
      json pts = json::array();
      for (const auto& q : points_of(p.at("points"), n)) {
        const auto d1 = covariant_curvature_derivative_norm(cfg.manifold.g, q, 1);
        const auto d2 = covariant_curvature_derivative_norm(cfg.manifold.g, q, 2);
        pts.push_back({{"point", vec_json(q)},
                       {"first", {{"max_abs", d1.value}, {"error_estimate", d1.estimated_fd_error}}},
                       {"second", {{"max_abs", d2.value}, {"error_estimate", d2.estimated_fd_error}}}});
      }
      e["status"] = "passed";
      e["points"] = pts;
    }
  } catch (const Error& err) {
    e["status"] = "error";
    e["error"] = error_json(err);
  }
  out.entry = std::move(e);
  return out;
}

inline std::string csv_of(const ode::TrajectoryResult& r, std::size_t n) {
  // t, x.., v.., u_metric, arc_length, then the remaining ledger entries.
  std::vector<const ode::LedgerSeries*> cols;
  for (const char* fixed : {"u_metric", "arc_length"})
    for (const auto& l : r.ledger)
      if (l.name == fixed) cols.push_back(&l);
  for (const auto& l : r.ledger)
    if (l.name != "u_metric" && l.name != "arc_length") cols.push_back(&l);
  std::string header = "t";
  for (std::size_t i = 1; i <= n; ++i) header += ",x" + std::to_string(i);
  for (std::size_t i = 1; i <= n; ++i) header += ",v" + std::to_string(i);
  for (const auto* c : cols) header += "," + c->name;
  std::string body = header + "\n";
  char buf[32];
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", r.times[i]);
    body += buf;
    for (double s : r.states[i]) {
      std::snprintf(buf, sizeof buf, ",%.17g", s);
      body += buf;
    }
    for (const auto* c : cols) {
      std::snprintf(buf, sizeof buf, ",%.17g", c->values[i]);
      body += buf;
    }
    body += "\n";
  }
  return body;
}

}  // namespace detail

/// Runs every initial condition and check; the report is a pure function of
/// the config, so it is byte-stable across runs and thread counts.
inline RunOutput run_scenario(const ScenarioConfig& cfg, std::optional<unsigned> threads = std::nullopt) {
  using namespace detail;
  const auto started = std::chrono::system_clock::now();
  const auto wall0 = std::chrono::steady_clock::now();
  const unsigned workers = threads ? std::max(1u, *threads) : worker_count();
  const auto n = static_cast<std::size_t>(cfg.manifold.g.dim());
  const MetricField& g = cfg.manifold.g;

  std::optional<mech::TrajectoryProblem> prob;
  if (cfg.problem) prob = mech::problem_from_expressions(g, *cfg.problem, cfg.functions);
  const ode::FlowSystem sys = prob ? mech::trajectory_system(*prob) : waves::geodesic_system(g);
  ode::IntegrateOptions iopt;
  iopt.rel_tol = cfg.run.rel_tol;
  iopt.abs_tol = cfg.run.abs_tol;
  iopt.speed_limit = cfg.run.speed_limit;
  iopt.sample_dt = cfg.run.horizon / static_cast<double>(cfg.run.samples);

  // Phase 1: global checks and integrations, fanned out together.
  std::vector<const CheckSpec*> globals, locals;
  for (const auto& c : cfg.checks) {
    if (c.kind == "hypotheses" || c.kind == "growth" || c.kind == "curvature-condition" ||
        c.kind == "covariant-derivatives")
      globals.push_back(&c);
    else
      locals.push_back(&c);
  }
  const std::size_t nic = cfg.initial_conditions.size();
  std::vector<GlobalResult> gres(globals.size());
  struct IcResult {
    std::optional<ode::TrajectoryResult> traj;
    std::optional<ode::EscapeEstimate> escape;
    std::string escape_note;
    std::optional<Error> error;
  };
  std::vector<IcResult> ires(nic);
  parallel_for(globals.size() + nic, workers, [&](std::size_t k) {
    if (k < globals.size()) {
      gres[k] = run_global_check(*globals[k], cfg, prob ? &*prob : nullptr);
      return;
    }
    const auto& ic = cfg.initial_conditions[k - globals.size()];
    auto& out = ires[k - globals.size()];
    ode::State s0;
    for (Eigen::Index i = 0; i < ic.x.size(); ++i) s0.push_back(ic.x(i));
    for (Eigen::Index i = 0; i < ic.v.size(); ++i) s0.push_back(ic.v(i));
    try {
      out.traj = ode::integrate(sys, ic.t0, s0, ic.t0 + cfg.run.horizon, iopt);
      const auto term = out.traj->termination;
      if (term == ode::Termination::ExitedDomain) {
        out.escape = out.traj->escape_estimate;
      } else if (term == ode::Termination::SpeedOverflow || term == ode::Termination::StepCollapse) {
        try {
          out.escape = ode::estimate_escape_time(sys, ic.t0, s0, cfg.run.rel_tol, ic.t0 + cfg.run.horizon, iopt);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NotIncomplete) throw;
          out.escape_note = e.what();
        }
      }
    } catch (const Error& e) {
      out.error = e;
    }
  });

  const GlobalResult* hyp = nullptr;
  for (std::size_t k = 0; k < globals.size(); ++k)
    if (globals[k]->kind == "hypotheses") hyp = &gres[k];

  // Phase 2: checks that need a trajectory.
  std::vector<json> ic_checks(nic, json::array());
  std::vector<bool> chain_held(nic, false);
  parallel_for(nic, workers, [&](std::size_t i) {
    const auto& ic = cfg.initial_conditions[i];
    const auto& r = ires[i];
    for (const auto* c : locals) {
      json e{{"kind", c->kind}};
      const auto& p = c->params;
      if (!r.traj) {
        e["status"] = "skipped";
        e["reason"] = "no trajectory";
        ic_checks[i].push_back(e);
        continue;
      }
      const auto& tr = *r.traj;
      try {
        if (c->kind == "bound-chain") {
          if (!hyp || !hyp->hypotheses || !hyp->hypotheses->chain) {
            e["status"] = "skipped";
            e["reason"] = "hypotheses did not certify";
          } else if (ic.t0 != hyp->entry.at("t0").get<double>()) {
            e["status"] = "skipped";
            e["reason"] = "initial time differs from the certified window";
          } else {
            mech::ChainInputs in = hyp->hypotheses->chain->in;
            in.u0 = mech::metric_speed_squared(g, ic.x, ic.v);
            in.V_init = prob->potential(ic.x, ic.t0);
            const auto chain = mech::bound_chain(in);
            const auto bc = mech::check_bound_on_trajectory(chain, tr, ic.t0, hyp->ball);
            const bool ok = bc.holds && bc.inside_region;
            chain_held[i] = ok;
            e["status"] = status(ok);
            e["margin"] = bc.min_gap;
            e["inside_region"] = bc.inside_region;
            e["first_violation"] = bc.first_violation ? json(*bc.first_violation) : json(nullptr);
            json audit = json::object();
            for (const auto& [k, v] : chain.audit()) audit[k] = v;
            e["chain"] = audit;
            e["l_max_at_b"] = chain.l_max(chain.in.b);
          }
        } else if (c->kind == "energy") {
          const double thr = p.value("threshold", 1e-5);
          const auto er = mech::energy_rate_residual(*prob, tr);
          e["status"] = status(er.max_residual < thr);
          e["max_residual"] = er.max_residual;
          e["at_time"] = er.at_time;
          e["threshold"] = thr;
          e["margin"] = thr - er.max_residual;
        } else if (c->kind == "killing") {
          const double thr = p.value("threshold", 1e-8);
          const double d = waves::killing_conservation(g, field_of(p.at("field"), cfg), tr);
          e["status"] = status(d < thr);
          e["max_drift"] = d;
          e["threshold"] = thr;
          e["margin"] = thr - d;
        } else if (c->kind == "reduction") {
          // Both sides of the correspondence: the reduced trajectory must be
          // complete exactly when the geodesic is. Escaping geodesics are
          // compared by escape time, complete ones by the pointwise residual.
          const auto red = waves::run_reduced(*cfg.manifold.ppwave, tr.states.front(), ic.t0, cfg.run.horizon, iopt);
          e["reduced_termination"] = ode::to_string(red.trajectory.termination);
          e["reduced_escape_estimate"] =
              red.escape ? json{{"time", red.escape->time}, {"uncertainty", red.escape->uncertainty}} : json(nullptr);
          if (r.escape) {
            bool ok = false;
            if (red.escape) {
              const double diff = std::abs(red.escape->time - r.escape->time);
              const double joint = red.escape->uncertainty + r.escape->uncertainty;
              ok = diff <= joint;
              e["escape_difference"] = diff;
              e["joint_uncertainty"] = joint;
              e["margin"] = joint - diff;
            } else {
              e["reason"] = "geodesic escapes but the reduced trajectory does not";
            }
            e["status"] = status(ok);
          } else {
            const double thr = p.value("threshold", 1e-4);
            const auto rr = waves::geodesic_riemannian_reduction_check(*cfg.manifold.ppwave, tr);
            const bool both_complete = tr.termination == ode::Termination::HorizonReached &&
                                       red.trajectory.termination == ode::Termination::HorizonReached;
            if (!both_complete) e["reason"] = "completeness of the geodesic and the reduced trajectory differ";
            e["status"] = status(rr.max_residual < thr && both_complete);
            e["max_residual"] = rr.max_residual;
            e["udot_drift"] = rr.udot_drift;
            e["threshold"] = thr;
            e["margin"] = thr - rr.max_residual;
          }
        }
      } catch (const Error& err) {
        e["status"] = "error";
        e["error"] = error_json(err);
      }
      ic_checks[i].push_back(std::move(e));
    }
  });

  // Single-writer merge in config order.
  RunOutput out;
  json& rep = out.report;
  rep["format"] = kFormat;
  rep["scenario"] = cfg.name;
  rep["description"] = cfg.description;
  rep["manifold"] = {{"kind", cfg.manifold.kind}, {"name", g.name()}, {"dim", g.dim()}, {"signature", g.signature()}};
  rep["flow"] = prob ? "trajectory" : "geodesic";
  rep["run"] = {{"horizon", cfg.run.horizon},
                {"rel_tol", cfg.run.rel_tol},
                {"abs_tol", cfg.run.abs_tol},
                {"samples", cfg.run.samples},
                {"speed_limit", cfg.run.speed_limit}};
  json checks = json::array(), certs = json::array();
  for (const auto& gr : gres) {
    checks.push_back(gr.entry);
    if (gr.hypotheses)
      for (const auto& h : gr.hypotheses->hypotheses)
        if (h.certificate) {
          json c = certificate_json(*h.certificate);
          c["hypothesis"] = h.name;
          certs.push_back(c);
        }
  }
  rep["global_checks"] = checks;
  rep["certificates"] = certs;
  const bool hyps_ok = hyp && hyp->hypotheses && hyp->hypotheses->all_passed();
  json ics = json::array();
  for (std::size_t i = 0; i < nic; ++i) {
    const auto& ic = cfg.initial_conditions[i];
    const auto& r = ires[i];
    json e;
    e["index"] = i;
    e["t0"] = ic.t0;
    e["x0"] = vec_json(ic.x);
    e["v0"] = vec_json(ic.v);
    Verdict v = Verdict::Inconclusive;
    if (r.error) {
      out.numeric_failure = true;
      e["termination"] = nullptr;
      e["escape_estimate"] = nullptr;
      e["final_state"] = nullptr;
      e["causal_character"] = nullptr;
      e["csv"] = nullptr;
      e["error"] = error_json(*r.error);
    } else {
      const auto& tr = *r.traj;
      e["termination"] = {{"reason", ode::to_string(tr.termination)},
                          {"final_time", tr.final_time},
                          {"last_step", tr.last_step},
                          {"accepted_steps", tr.accepted_steps},
                          {"rejected_steps", tr.rejected_steps},
                          {"note", tr.note.empty() ? r.escape_note : tr.note}};
      e["escape_estimate"] = r.escape ? json{{"time", r.escape->time}, {"uncertainty", r.escape->uncertainty}} : json(nullptr);
      json fs = json::array();
      for (double s : tr.states.back()) fs.push_back(s);
      e["final_state"] = fs;
      if (g.signature() > 0 && !prob) {
        std::string first, last;
        bool preserved = true;
        for (const auto& s : tr.states) {
          const Vec x = Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(n));
          const Vec w = Eigen::Map<const Vec>(s.data() + n, static_cast<Eigen::Index>(n));
          try {
            last = std::string(to_string(causal_character(g, x, w)));
          } catch (const Error&) {
            continue;
          }
          if (first.empty()) first = last;
          preserved = preserved && last == first;
        }
        e["causal_character"] = {{"initial", first}, {"final", last}, {"preserved", preserved}};
      } else {
        e["causal_character"] = nullptr;
      }
      char name[40];
      std::snprintf(name, sizeof name, "trajectory_%03zu.csv", i);
      e["csv"] = name;
      e["samples"] = tr.times.size();
      out.csv.emplace_back(name, csv_of(tr, n));
      e["error"] = nullptr;

      bool all_local_ok = true;
      for (const auto& c : ic_checks[i])
        if (c.at("status") != "passed") all_local_ok = false;
      if (r.escape) {
        v = Verdict::NumericallyIncomplete;
      } else if (tr.termination == ode::Termination::HorizonReached) {
        const bool certified = hyps_ok && cfg.has_check("bound-chain") && chain_held[i] && all_local_ok;
        v = certified ? Verdict::CertifiedComplete : Verdict::NumericallyCompleteToHorizon;
      }
    }
    e["verdict"] = to_string(v);
    e["checks"] = ic_checks[i];
    ics.push_back(std::move(e));
  }
  rep["initial_conditions"] = ics;
  rep["config"] = cfg.source;

  auto iso = [](std::chrono::system_clock::time_point tp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  };
  out.meta = {{"format", kFormat},
              {"scenario", cfg.name},
              {"started_at", iso(started)},
              {"finished_at", iso(std::chrono::system_clock::now())},
              {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count()},
              {"threads", workers}};
  return out;
}

/// report.json, meta.json and the trajectory CSVs.
inline void write_artifacts(const RunOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& body) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) fail(ErrorCode::InvalidArgument, "cannot write " + (dir / name).string());
    f << body;
  };
  put("report.json", out.report.dump(2) + "\n");
  put("meta.json", out.meta.dump(2) + "\n");
  for (const auto& [name, body] : out.csv) put(name, body);
}

}  // namespace cplab::scenario
