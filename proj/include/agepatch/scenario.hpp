#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "agepatch/errors.hpp"
#include "agepatch/linalg.hpp"

namespace agepatch {

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

namespace detail {

/// round(x) if x is within 1e-9 (relative) of an integer, otherwise -1.
inline long exact_ratio(double num, double den) {
  if (!(den > 0.0) || !std::isfinite(num)) return -1;
  const double r = num / den;
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-9 * std::max(1.0, std::abs(r))) return -1;
  return static_cast<long>(n);
}

inline long floor_mod(long a, long m) {
  const long r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace detail

/// Shared age/time lattice. Age and time use the same step so that the
/// characteristics a - t = const pass through lattice nodes.
struct AgeTimeGrid {
  double delta = 0.02;
  double a_max = 40.0;
  double t_end = 100.0;
  std::optional<double> period;

  long age_steps() const { return detail::exact_ratio(a_max, delta); }
  long time_steps() const { return detail::exact_ratio(t_end, delta); }
  long period_steps() const { return period ? detail::exact_ratio(*period, delta) : 0; }

  double age(long i) const { return static_cast<double>(i) * delta; }
  double time(long n) const { return static_cast<double>(n) * delta; }

  bool operator==(const AgeTimeGrid&) const = default;
};

// ---------------------------------------------------------------------------
// Age profiles
// ---------------------------------------------------------------------------

struct ConstantProfile {
  double value = 0.0;
  bool operator==(const ConstantProfile&) const = default;
};

/// Piecewise-linear interpolation through (ages[i], values[i]).
struct TableProfile {
  std::vector<double> ages;
  std::vector<double> values;
  bool operator==(const TableProfile&) const = default;
};

/// `value` on the closed interval [a_lo, a_hi], zero elsewhere.
struct WindowProfile {
  double value = 0.0;
  double a_lo = 0.0;
  double a_hi = 0.0;
  bool operator==(const WindowProfile&) const = default;
};

struct RateProfile {
  std::variant<ConstantProfile, TableProfile, WindowProfile> kind;

  static RateProfile constant(double v) { return {ConstantProfile{v}}; }
  static RateProfile window(double v, double lo, double hi) { return {WindowProfile{v, lo, hi}}; }
  static RateProfile table(std::vector<double> ages, std::vector<double> values) {
    return {TableProfile{std::move(ages), std::move(values)}};
  }

  double operator()(double a) const {
    if (const auto* c = std::get_if<ConstantProfile>(&kind)) return c->value;
    if (const auto* w = std::get_if<WindowProfile>(&kind))
      return (a >= w->a_lo && a <= w->a_hi) ? w->value : 0.0;
    const auto& t = std::get<TableProfile>(kind);
    if (t.ages.empty()) return 0.0;
    if (a <= t.ages.front()) return t.values.front();
    if (a >= t.ages.back()) return t.values.back();
    const auto it = std::upper_bound(t.ages.begin(), t.ages.end(), a);
    const auto hi = static_cast<std::size_t>(it - t.ages.begin());
    const std::size_t lo = hi - 1;
    const double w = (a - t.ages[lo]) / (t.ages[hi] - t.ages[lo]);
    return t.values[lo] + w * (t.values[hi] - t.values[lo]);
  }

  /// Largest value the profile takes anywhere.
  double peak() const {
    if (const auto* c = std::get_if<ConstantProfile>(&kind)) return c->value;
    if (const auto* w = std::get_if<WindowProfile>(&kind)) return w->value;
    const auto& t = std::get<TableProfile>(kind);
    return t.values.empty() ? 0.0 : *std::max_element(t.values.begin(), t.values.end());
  }

  bool operator==(const RateProfile&) const = default;
};

// ---------------------------------------------------------------------------
// Time modulations (multipliers applied to an age profile)
// ---------------------------------------------------------------------------

struct NoModulation {
  bool operator==(const NoModulation&) const = default;
};

/// scale * (1 + beta * sin(2 pi t / period + phase))
struct SinusoidalModulation {
  double beta = 0.0;
  double period = 1.0;
  double phase = 0.0;
  double scale = 1.0;
  bool operator==(const SinusoidalModulation&) const = default;
};

/// M equally spaced samples over one period, interpolated linearly and
/// wrapped.
struct PeriodicTableModulation {
  double period = 1.0;
  std::vector<double> values;
  bool operator==(const PeriodicTableModulation&) const = default;
};

using PeriodicModulation =
    std::variant<NoModulation, SinusoidalModulation, PeriodicTableModulation>;

inline double evaluate(const PeriodicModulation& mod, double t) {
  if (std::holds_alternative<NoModulation>(mod)) return 1.0;
  if (const auto* s = std::get_if<SinusoidalModulation>(&mod))
    return s->scale * (1.0 + s->beta * std::sin(2.0 * std::numbers::pi * t / s->period + s->phase));
  const auto& p = std::get<PeriodicTableModulation>(mod);
  const auto m = static_cast<long>(p.values.size());
  if (m == 0) return 0.0;
  const double pos = t / p.period * static_cast<double>(m);
  const double base = std::floor(pos);
  const double w = pos - base;
  const long i0 = detail::floor_mod(static_cast<long>(base), m);
  const long i1 = (i0 + 1) % m;
  return p.values[static_cast<std::size_t>(i0)] +
         w * (p.values[static_cast<std::size_t>(i1)] - p.values[static_cast<std::size_t>(i0)]);
}

/// Period of a periodic modulation; nullopt for the unmodulated kind.
inline std::optional<double> period_of(const PeriodicModulation& mod) {
  if (const auto* s = std::get_if<SinusoidalModulation>(&mod)) return s->period;
  if (const auto* p = std::get_if<PeriodicTableModulation>(&mod)) return p->period;
  return std::nullopt;
}

/// Seeded random multiplier confined between two periodic envelopes.
/// A uniform fraction u_n in [0,1) is drawn for every grid node and the
/// multiplier is lo(t) + u(t) (hi(t) - lo(t)) with u interpolated linearly
/// between nodes. `fractions` is filled by materialize().
struct IrregularModulation {
  PeriodicModulation lo;
  PeriodicModulation hi;
  std::uint64_t seed = 0;
  double delta = 0.0;
  std::vector<double> fractions;

  bool operator==(const IrregularModulation&) const = default;
};

struct TimeModulation {
  std::variant<NoModulation, SinusoidalModulation, PeriodicTableModulation, IrregularModulation>
      kind;

  static TimeModulation none() { return {NoModulation{}}; }
  static TimeModulation sinusoidal(double beta, double period, double phase = 0.0,
                                   double scale = 1.0) {
    return {SinusoidalModulation{beta, period, phase, scale}};
  }
  static TimeModulation periodic_table(double period, std::vector<double> values) {
    return {PeriodicTableModulation{period, std::move(values)}};
  }
  static TimeModulation irregular(PeriodicModulation lo, PeriodicModulation hi,
                                  std::uint64_t seed) {
    return {IrregularModulation{std::move(lo), std::move(hi), seed, 0.0, {}}};
  }

  bool is_none() const { return std::holds_alternative<NoModulation>(kind); }
  bool is_irregular() const { return std::holds_alternative<IrregularModulation>(kind); }

  std::optional<PeriodicModulation> as_periodic() const {
    return std::visit(
        [](const auto& m) -> std::optional<PeriodicModulation> {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, IrregularModulation>) {
            return std::nullopt;
          } else {
            return PeriodicModulation{m};
          }
        },
        kind);
  }

  double operator()(double t) const {
    if (const auto* irr = std::get_if<IrregularModulation>(&kind)) {
      if (irr->fractions.size() < 2 || !(irr->delta > 0.0))
        throw ConfigurationError("irregular modulation has not been sampled onto the grid");
      const auto last = static_cast<long>(irr->fractions.size()) - 1;
      const double pos = t / irr->delta;
      long n = static_cast<long>(std::floor(pos));
      n = std::clamp(n, 0L, last - 1);
      const double w = std::clamp(pos - static_cast<double>(n), 0.0, 1.0);
      const auto i = static_cast<std::size_t>(n);
      const double u = irr->fractions[i] + w * (irr->fractions[i + 1] - irr->fractions[i]);
      const double lo = evaluate(irr->lo, t);
      const double hi = evaluate(irr->hi, t);
      return lo + u * (hi - lo);
    }
    return evaluate(*as_periodic(), t);
  }

  bool operator==(const TimeModulation&) const = default;
};

/// Draws the per-node fractions of an irregular modulation. Deterministic in
/// (seed, grid): the 53 high bits of each mt19937_64 output give u in [0,1).
inline void materialize(IrregularModulation& irr, const AgeTimeGrid& grid) {
  const long steps = grid.time_steps();
  if (steps <= 0) throw SchemaError("grid.t_end must be a positive multiple of grid.delta");
  std::mt19937_64 gen(irr.seed);
  irr.delta = grid.delta;
  irr.fractions.resize(static_cast<std::size_t>(steps) + 1);
  for (double& u : irr.fractions) u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// A rate r(a, t) = profile(a) * modulation(t).
struct Rate {
  RateProfile profile;
  TimeModulation modulation = TimeModulation::none();

  static Rate constant(double v) { return {RateProfile::constant(v), TimeModulation::none()}; }

  double operator()(double a, double t) const { return profile(a) * modulation(t); }

  bool operator==(const Rate&) const = default;
};

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct PatchRates {
  Rate mu;          // mortality, 1/year
  Rate m;           // fertility, 1/year
  Rate L;           // regulating function, density units
  RateProfile initial;  // f_k(a)

  bool operator==(const PatchRates&) const = default;
};

enum class DiagonalMode { explicit_outflow, mass_conserving };

/// D_kj for k != j is the per-capita flow from patch j into patch k.
/// The diagonal D_kk <= 0 is either -outflow[k] (explicit) or minus the
/// column sum of the off-diagonal entries (mass conserving).
struct DispersionSpec {
  DiagonalMode mode = DiagonalMode::mass_conserving;
  std::vector<std::optional<Rate>> offdiag;  // N*N row-major, diagonal unused
  std::vector<Rate> outflow;                 // explicit mode only, size N

  static DispersionSpec none(std::size_t n) {
    DispersionSpec d;
    d.offdiag.assign(n * n, std::nullopt);
    return d;
  }

  /// Sets D_{to,from}; indices are 0-based.
  void set(std::size_t to, std::size_t from, Rate r) {
    const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(offdiag.size()))));
    offdiag[to * n + from] = std::move(r);
  }

  bool operator==(const DispersionSpec&) const = default;
};

enum class Environment { constant, periodic, irregular };

inline const char* to_string(Environment e) {
  switch (e) {
    case Environment::constant: return "constant";
    case Environment::periodic: return "periodic";
    case Environment::irregular: return "irregular";
  }
  return "?";
}

struct ScenarioSpec {
  std::vector<PatchRates> patches;
  DispersionSpec dispersion;
  AgeTimeGrid grid;
  Environment environment = Environment::constant;

  std::size_t n_patches() const { return patches.size(); }

  template <class F>
  void for_each_rate(F&& f) const {
    for (const auto& p : patches) {
      f(p.mu);
      f(p.m);
      f(p.L);
    }
    for (const auto& d : dispersion.offdiag)
      if (d) f(*d);
    for (const auto& r : dispersion.outflow) f(r);
  }

  template <class F>
  void for_each_rate(F&& f) {
    for (auto& p : patches) {
      f(p.mu);
      f(p.m);
      f(p.L);
    }
    for (auto& d : dispersion.offdiag)
      if (d) f(*d);
    for (auto& r : dispersion.outflow) f(r);
  }

  bool operator==(const ScenarioSpec&) const = default;
};

/// Samples every irregular modulation of `spec` onto its grid.
inline void materialize(ScenarioSpec& spec) {
  spec.for_each_rate([&](Rate& r) {
    if (auto* irr = std::get_if<IrregularModulation>(&r.modulation.kind)) materialize(*irr, spec.grid);
  });
}

// ---------------------------------------------------------------------------
// Pointwise evaluation
// ---------------------------------------------------------------------------

struct RateSample {
  Vector mu;
  Vector m;
  Vector L;
  Matrix D;
};

/// Value of D at (a, t), diagonal included.
inline Matrix dispersion_at(const ScenarioSpec& spec, double a, double t) {
  const std::size_t n = spec.n_patches();
  Matrix d(n, n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      if (k != j && spec.dispersion.offdiag[k * n + j]) d(k, j) = (*spec.dispersion.offdiag[k * n + j])(a, t);
  for (std::size_t k = 0; k < n; ++k) {
    if (spec.dispersion.mode == DiagonalMode::explicit_outflow) {
      d(k, k) = spec.dispersion.outflow.empty() ? 0.0 : -spec.dispersion.outflow[k](a, t);
    } else {
      double out = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != k) out += d(j, k);
      d(k, k) = -out;
    }
  }
  return d;
}

/// Rates at a single (age, time) point. Periodic environments accept any t;
/// the other kinds require 0 <= t <= t_end.
inline RateSample eval_rates(const ScenarioSpec& spec, double a, double t) {
  const double tol = 1e-9 * std::max(1.0, spec.grid.t_end);
  if (a < -tol || a > spec.grid.a_max + tol)
    throw ConfigurationError("age " + std::to_string(a) + " outside [0, a_max]");
  if (spec.environment != Environment::periodic && (t < -tol || t > spec.grid.t_end + tol))
    throw ConfigurationError("time " + std::to_string(t) + " outside [0, t_end]");
  RateSample s;
  for (const auto& p : spec.patches) {
    s.mu.push_back(p.mu(a, t));
    s.m.push_back(p.m(a, t));
    s.L.push_back(p.L(a, t));
  }
  s.D = dispersion_at(spec, a, t);
  return s;
}

// ---------------------------------------------------------------------------
// Essential positivity
// ---------------------------------------------------------------------------

using Pattern = std::vector<std::vector<bool>>;

struct PositivityResult {
  bool essentially_positive = false;
  /// witness[k][j]: path k = m_0, ..., m_s = j with pattern[m_i][m_{i+1}]
  /// true; empty when absent or k == j.
  std::vector<std::vector<std::vector<int>>> witness;
};

/// Strong connectivity of the digraph with an edge u -> v wherever
/// pattern[u][v] is set. BFS from every vertex; paths are shortest, hence
/// made of pairwise distinct vertices.
inline PositivityResult check_essential_positivity(const Pattern& pattern) {
  const int n = static_cast<int>(pattern.size());
  PositivityResult res;
  res.essentially_positive = true;
  res.witness.assign(static_cast<std::size_t>(n),
                     std::vector<std::vector<int>>(static_cast<std::size_t>(n)));
  for (int src = 0; src < n; ++src) {
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::queue<int> q;
    q.push(src);
    seen[static_cast<std::size_t>(src)] = true;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v = 0; v < n; ++v) {
        if (v == u || seen[static_cast<std::size_t>(v)] ||
            !pattern[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)])
          continue;
        seen[static_cast<std::size_t>(v)] = true;
        parent[static_cast<std::size_t>(v)] = u;
        q.push(v);
      }
    }
    for (int dst = 0; dst < n; ++dst) {
      if (dst == src) continue;
      if (!seen[static_cast<std::size_t>(dst)]) {
        res.essentially_positive = false;
        continue;
      }
      std::vector<int> path;
      for (int v = dst; v != -1; v = parent[static_cast<std::size_t>(v)]) path.push_back(v);
      std::reverse(path.begin(), path.end());
      res.witness[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)] = std::move(path);
    }
  }
  if (!res.essentially_positive)
    for (auto& row : res.witness)
      for (auto& w : row) w.clear();
  return res;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Severity { warning, error };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string code;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::error; });
}

namespace detail {

/// Half-step sample points of [0, hi].
inline std::vector<double> half_nodes(double hi, double delta) {
  std::vector<double> xs;
  const long n = std::max(0L, static_cast<long>(std::llround(2.0 * hi / delta)));
  xs.reserve(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) xs.push_back(0.5 * delta * static_cast<double>(i));
  return xs;
}

inline std::string describe_profile_problem(const RateProfile& p, double a_max) {
  if (const auto* c = std::get_if<ConstantProfile>(&p.kind)) {
    if (!std::isfinite(c->value)) return "value is not finite";
    if (c->value < 0.0) return "negative value";
  } else if (const auto* w = std::get_if<WindowProfile>(&p.kind)) {
    if (!std::isfinite(w->value) || w->value < 0.0) return "window value must be finite and >= 0";
    if (!(w->a_lo <= w->a_hi)) return "window requires a_lo <= a_hi";
  } else {
    const auto& t = std::get<TableProfile>(p.kind);
    if (t.ages.size() != t.values.size() || t.ages.empty()) return "table ages/values size mismatch";
    for (std::size_t i = 1; i < t.ages.size(); ++i)
      if (!(t.ages[i] > t.ages[i - 1])) return "table breakpoints must be strictly increasing";
    if (t.ages.front() > 0.0 || t.ages.back() < a_max) return "table breakpoints must cover [0, a_max]";
    for (double v : t.values)
      if (!std::isfinite(v) || v < 0.0) return "table values must be finite and >= 0";
  }
  return {};
}

}  // namespace detail

/// Collects every violated invariant. Never throws.
inline std::vector<Diagnostic> validate_scenario(const ScenarioSpec& spec) {
  std::vector<Diagnostic> out;
  auto error = [&](std::string code, std::string msg) {
    out.push_back({Severity::error, std::move(code), std::move(msg)});
  };

  const auto& g = spec.grid;
  const std::size_t n = spec.n_patches();
  if (n == 0) error("patches", "at least one patch is required");
  if (!(g.delta > 0.0)) {
    error("grid", "delta must be positive");
    return out;
  }
  if (g.age_steps() <= 0) error("grid", "a_max must be a positive integer multiple of delta");
  if (g.time_steps() <= 0) error("grid", "t_end must be a positive integer multiple of delta");
  if (g.period && (!(*g.period > 0.0) || g.period_steps() <= 0))
    error("grid", "period must be a positive integer multiple of delta");
  if (spec.environment != Environment::constant && !g.period)
    error("grid", std::string(to_string(spec.environment)) + " environment requires grid.period");
  if (!out.empty()) return out;

  if (spec.dispersion.offdiag.size() != n * n) {
    error("dispersion", "off-diagonal table must be N x N");
    return out;
  }
  if (spec.dispersion.mode == DiagonalMode::explicit_outflow && spec.dispersion.outflow.size() != n) {
    error("dispersion", "explicit diagonal mode needs one outflow rate per patch");
    return out;
  }

  // Environment / modulation consistency.
  bool any_irregular = false;
  auto check_periodic = [&](const PeriodicModulation& pm, const std::string& what) {
    if (const auto* s = std::get_if<SinusoidalModulation>(&pm)) {
      if (!(s->beta > -1.0 && s->beta < 1.0)) error("modulation", what + ": beta must lie in (-1, 1)");
      if (!(s->scale > 0.0)) error("modulation", what + ": sinusoidal scale must be positive");
    }
    if (const auto* t = std::get_if<PeriodicTableModulation>(&pm)) {
      if (t->values.empty()) error("modulation", what + ": periodic table is empty");
      for (double v : t->values)
        if (!std::isfinite(v) || v < 0.0) error("modulation", what + ": periodic table values must be >= 0");
    }
    if (auto p = period_of(pm)) {
      if (!(*p > 0.0)) {
        error("modulation", what + ": period must be positive");
      } else if (!g.period || detail::exact_ratio(*g.period, *p) <= 0) {
        error("environment", what + ": modulation period must divide grid.period");
      }
    }
  };
  auto check_modulation = [&](const TimeModulation& tm, const std::string& what) {
    switch (spec.environment) {
      case Environment::constant:
        if (!tm.is_none()) error("environment", what + ": constant environment allows no modulation");
        break;
      case Environment::periodic:
        if (tm.is_irregular()) error("environment", what + ": periodic environment cannot hold irregular modulation");
        else check_periodic(*tm.as_periodic(), what);
        break;
      case Environment::irregular:
        if (const auto* irr = std::get_if<IrregularModulation>(&tm.kind)) {
          any_irregular = true;
          check_periodic(irr->lo, what + " (lo envelope)");
          check_periodic(irr->hi, what + " (hi envelope)");
          if (irr->fractions.size() != static_cast<std::size_t>(g.time_steps()) + 1)
            error("modulation", what + ": irregular samples not materialized on the grid");
        } else {
          check_periodic(*tm.as_periodic(), what);
        }
        break;
    }
  };

  const auto ages = detail::half_nodes(g.a_max, g.delta);
  const double t_hi = std::max(g.t_end, g.period.value_or(0.0));
  const auto times = detail::half_nodes(t_hi, g.delta);

  // Signs. `strict` means the rate must be > 0 everywhere.
  auto check_rate = [&](const Rate& r, const std::string& what, bool strict) {
    const auto prob = detail::describe_profile_problem(r.profile, g.a_max);
    if (!prob.empty()) error("profile", what + ": " + prob);
    const std::size_t before = out.size();
    check_modulation(r.modulation, what);
    if (!prob.empty() || out.size() != before) return;
    double pmin = std::numeric_limits<double>::infinity();
    for (double a : ages) pmin = std::min(pmin, r.profile(a));
    double tmin = std::numeric_limits<double>::infinity();
    double lo_hi_gap = std::numeric_limits<double>::infinity();
    for (double t : times) {
      if (spec.environment != Environment::periodic && t > g.t_end) break;
      tmin = std::min(tmin, r.modulation(t));
      if (const auto* irr = std::get_if<IrregularModulation>(&r.modulation.kind))
        lo_hi_gap = std::min(lo_hi_gap, evaluate(irr->hi, t) - evaluate(irr->lo, t));
    }
    if (lo_hi_gap < 0.0) error("modulation", what + ": irregular lo envelope exceeds hi envelope");
    if (strict) {
      if (!(pmin > 0.0) || !(tmin > 0.0)) {
        if (what.find(".L") != std::string::npos)
          error("sign", what + ": L must be strictly positive");
        else
          error("sign", what + ": must be strictly positive");
      }
    } else if (pmin < 0.0 || tmin < 0.0) {
      error("sign", what + ": must be nonnegative");
    }
  };

  for (std::size_t k = 0; k < n; ++k) {
    const std::string p = "patch " + std::to_string(k + 1);
    check_rate(spec.patches[k].mu, p + ".mu", true);
    check_rate(spec.patches[k].m, p + ".m", false);
    check_rate(spec.patches[k].L, p + ".L", true);
    const auto prob = detail::describe_profile_problem(spec.patches[k].initial, g.a_max);
    if (!prob.empty()) error("profile", p + ".initial: " + prob);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      const auto& r = spec.dispersion.offdiag[k * n + j];
      if (!r) continue;
      if (k == j) {
        error("dispersion", "off-diagonal table has an entry on the diagonal");
        continue;
      }
      check_rate(*r, "dispersion " + std::to_string(j + 1) + "->" + std::to_string(k + 1), false);
    }
  for (std::size_t k = 0; k < spec.dispersion.outflow.size(); ++k)
    check_rate(spec.dispersion.outflow[k], "dispersion outflow " + std::to_string(k + 1), false);

  if (spec.environment == Environment::irregular && !any_irregular)
    error("environment", "irregular environment requires at least one irregular modulation");
  if (has_errors(out)) return out;

  // Essential positivity of the dispersion pattern.
  if (n >= 2) {
    Pattern pat(n, std::vector<bool>(n, false));
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) {
        const auto& r = spec.dispersion.offdiag[k * n + j];
        if (k == j || !r) continue;
        bool age_pos = false;
        for (double a : ages) age_pos = age_pos || r->profile(a) > 0.0;
        bool time_pos = false;
        for (double t : times) {
          if (spec.environment != Environment::periodic && t > g.t_end) break;
          time_pos = time_pos || r->modulation(t) > 0.0;
        }
        pat[k][j] = age_pos && time_pos;
      }
    if (!check_essential_positivity(pat).essentially_positive)
      error("essential_positivity", "dispersion matrix is not essentially positive");
  }

  // Birth support: m must be negligible at the truncation age.
  for (std::size_t k = 0; k < n; ++k) {
    // Rates are profile(a) * modulation(t) with both factors >= 0, so the
    // extrema separate.
    const auto& pr = spec.patches[k];
    double m_mod_max = 0.0;
    double mu_mod_min = std::numeric_limits<double>::infinity();
    for (double t : times) {
      if (spec.environment != Environment::periodic && t > g.t_end) break;
      m_mod_max = std::max(m_mod_max, pr.m.modulation(t));
      mu_mod_min = std::min(mu_mod_min, pr.mu.modulation(t));
    }
    double m_prof_max = 0.0;
    double mu_prof_min = std::numeric_limits<double>::infinity();
    for (double a : ages) {
      m_prof_max = std::max(m_prof_max, pr.m.profile(a));
      mu_prof_min = std::min(mu_prof_min, pr.mu.profile(a));
    }
    const double m_end = pr.m.profile(g.a_max) * m_mod_max;
    const double m_scale = m_prof_max * m_mod_max;
    const double mu_min = mu_prof_min * mu_mod_min;
    if (m_end > 0.0 && m_end * std::exp(-mu_min * g.a_max) > 1e-8 * m_scale) {
      out.push_back({Severity::warning, "birth_truncation",
                     "patch " + std::to_string(k + 1) +
                         ": fertility at a_max is not negligible; truncation residual exceeds 1e-8"});
    }
  }
  return out;
}

}  // namespace agepatch
