#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "agepatch/renewal.hpp"
#include "agepatch/spectral.hpp"

namespace agepatch {

enum class Classification { extinction, persistence };

inline const char* to_string(Classification c) {
  return c == Classification::persistence ? "persistence" : "extinction";
}

/// sigma = 1 belongs to the trivial branch.
inline Classification classify_sigma(double sigma) {
  return sigma > 1.0 ? Classification::persistence : Classification::extinction;
}

struct Evidence {
  Vector final_rho;
  double peak_rho = 0.0;
  /// persistence: |rho(t_end) - rho*(t_end)| / |rho*| (max norms);
  /// extinction: |rho(t_end)| / peak.
  double relative_gap = 0.0;
  /// Gap envelope over the tail window is non-increasing.
  bool monotone_tail = false;
  double tail_start = 0.0;
};

struct PersistenceVerdict {
  double sigma = 0.0;
  Classification classification = Classification::extinction;
  ReproductiveOperator op;
  FixedPoint fixed_point;
  Evidence evidence;
  MarchResult trajectory;
};

struct TailOptions {
  /// Tail window is [start_fraction * t_end, t_end].
  double start_fraction = 0.5;
  /// Number of consecutive blocks whose maxima form the gap envelope.
  int blocks = 8;
  /// Gaps below noise_floor times the fixed-point (or peak) scale count as
  /// converged when judging monotonicity.
  double noise_floor = 1e-6;
};

namespace detail {

/// Fixed-point value for the newborns at time index n (phase-aligned for
/// periodic fixed points).
inline std::span<const double> fixed_point_at(const FixedPoint& fp, std::size_t n_patches, long n) {
  const long phase = fp.kind == FixedPointKind::periodic ? n % fp.phases : 0;
  return std::span<const double>(fp.values).subspan(static_cast<std::size_t>(phase) * n_patches, n_patches);
}

/// Sup-norm gap between rho(t_n) and the fixed point.
inline double gap_at(const NewbornTrajectory& rho, const FixedPoint& fp, long n) {
  const auto target = fixed_point_at(fp, rho.patches, n);
  return max_abs_diff(rho.at(static_cast<std::size_t>(n)), target);
}

/// Block maxima of the gap over the tail; the envelope is monotone when each
/// block maximum does not exceed its predecessor. Renewal dynamics approach
/// equilibrium with damped oscillations, so pointwise monotonicity of the
/// gap is not expected. Blocks already at or below `floor` pass: there the
/// gap is rounding and fixed-point tolerance, not dynamics.
inline bool monotone_envelope(const std::vector<double>& gaps, int blocks, double floor) {
  if (gaps.size() < static_cast<std::size_t>(blocks) || blocks < 2) return true;
  const std::size_t len = gaps.size() / static_cast<std::size_t>(blocks);
  double prev = std::numeric_limits<double>::infinity();
  for (int b = 0; b < blocks; ++b) {
    const auto first = gaps.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b) * len);
    const auto last = b + 1 == blocks ? gaps.end() : first + static_cast<std::ptrdiff_t>(len);
    const double m = *std::max_element(first, last);
    if (m > prev && m > floor) return false;
    prev = m;
  }
  return true;
}

inline Evidence collect_evidence(const MarchResult& run, const FixedPoint& fp, Classification cls,
                                 const TailOptions& tail) {
  Evidence ev;
  const auto& rho = run.newborns;
  const long last = static_cast<long>(rho.size()) - 1;
  const auto fin = rho.at(static_cast<std::size_t>(last));
  ev.final_rho.assign(fin.begin(), fin.end());
  ev.peak_rho = max_norm(rho.values);
  const long first_tail = static_cast<long>(std::ceil(tail.start_fraction * static_cast<double>(last)));
  ev.tail_start = rho.time(static_cast<std::size_t>(first_tail));
  std::vector<double> gaps;
  for (long n = first_tail; n <= last; ++n) gaps.push_back(gap_at(rho, fp, n));
  const double floor = tail.noise_floor * (cls == Classification::persistence ? max_norm(fp.values) : ev.peak_rho);
  ev.monotone_tail = monotone_envelope(gaps, tail.blocks, floor);
  if (cls == Classification::persistence) {
    const double scale = max_norm(fp.values);
    ev.relative_gap = scale > 0.0 ? gap_at(rho, fp, last) / scale : 0.0;
  } else {
    ev.relative_gap = ev.peak_rho > 0.0 ? max_norm(fin) / ev.peak_rho : 0.0;
  }
  return ev;
}

}  // namespace detail

/// Spectral radius, fixed point and a marched trajectory for a constant or
/// periodic scenario.
inline PersistenceVerdict classify(const DiscreteModel& model, const TailOptions& tail = {},
                                   const FixedPointOptions& fp_opts = {}) {
  PersistenceVerdict v;
  switch (model.environment()) {
    case Environment::constant:
      v.op = build_R0(model);
      v.fixed_point = solve_rho_star(model, v.op, fp_opts);
      break;
    case Environment::periodic:
      v.op = build_R0_periodic(model);
      v.fixed_point = solve_rho_star_periodic(model, v.op, fp_opts);
      break;
    case Environment::irregular:
      throw ConfigurationError("classify needs a constant or periodic environment; use envelope analysis");
  }
  v.sigma = v.op.sigma;
  v.classification = classify_sigma(v.sigma);
  v.trajectory = march(model);
  v.evidence = detail::collect_evidence(v.trajectory, v.fixed_point, v.classification, tail);
  return v;
}

namespace detail {

/// int_0^{a_max} m_k(a) exp(-int_0^a rate(v) dv) da, the survival factor
/// integrated with the same fourth-order step as the cohorts.
template <class RateAt>
double survival_integral(const DiscreteModel& model, std::size_t k, RateAt&& rate_at) {
  const long na = model.age_steps();
  const double dt = model.delta();
  double s = 1.0;
  double acc = 0.0;
  for (long i = 0; i <= na; ++i) {
    if (i > 0) {
      const double r0 = rate_at(2 * (i - 1));
      const double r1 = rate_at(2 * i - 1);
      const double r2 = rate_at(2 * i);
      const double k1 = -r0 * s;
      const double k2 = -r1 * (s + 0.5 * dt * k1);
      const double k3 = -r1 * (s + 0.5 * dt * k2);
      const double k4 = -r2 * (s + dt * k3);
      s = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    acc += trapezoid_weight(i, na, dt) * model.birth(k, i, 0) * s;
  }
  return acc;
}

}  // namespace detail

/// Net reproductive rate of every patch in isolation (D = 0).
inline Vector isolated_rates(const DiscreteModel& model) {
  detail::require_environment(model, Environment::constant, "isolated_rates");
  Vector out;
  for (std::size_t k = 0; k < model.patches(); ++k)
    out.push_back(detail::survival_integral(model, k, [&](long ah) { return model.mortality(k, ah, 0); }));
  return out;
}

/// Lower bound on sigma(R0): every emigrant is lost, so each patch keeps
/// only survivors of mu_k + |D_kk|.
inline double dispersal_lower_bound(const DiscreteModel& model) {
  detail::require_environment(model, Environment::constant, "dispersal_lower_bound");
  double best = 0.0;
  for (std::size_t k = 0; k < model.patches(); ++k)
    best = std::max(best, detail::survival_integral(model, k, [&](long ah) {
      return model.mortality(k, ah, 0) + model.outflow(k, ah, 0);
    }));
  return best;
}

// ---------------------------------------------------------------------------
// Irregular environments
// ---------------------------------------------------------------------------

/// Periodic problems bounding an irregular one: `lower` takes the
/// unfavourable envelope of every irregular rate (low m, L and inflow; high
/// mu and outflow), `upper` the favourable one.
struct EnvelopePair {
  ScenarioSpec lower;
  ScenarioSpec upper;
  double epsilon = 0.05;
};

namespace detail {

inline void replace_irregular(Rate& r, bool favourable_is_high, bool want_favourable) {
  if (const auto* irr = std::get_if<IrregularModulation>(&r.modulation.kind)) {
    const bool take_hi = favourable_is_high == want_favourable;
    const PeriodicModulation env = take_hi ? irr->hi : irr->lo;
    r.modulation = std::visit([](auto m) { return TimeModulation{m}; }, env);
  }
}

inline ScenarioSpec envelope_spec(const ScenarioSpec& spec, bool favourable) {
  ScenarioSpec out = spec;
  out.environment = Environment::periodic;
  for (auto& p : out.patches) {
    replace_irregular(p.mu, false, favourable);
    replace_irregular(p.m, true, favourable);
    replace_irregular(p.L, true, favourable);
  }
  for (auto& d : out.dispersion.offdiag)
    if (d) replace_irregular(*d, true, favourable);
  for (auto& r : out.dispersion.outflow) replace_irregular(r, false, favourable);
  return out;
}

}  // namespace detail

inline EnvelopePair make_envelopes(const ScenarioSpec& spec, double epsilon = 0.05) {
  if (spec.environment != Environment::irregular)
    throw ConfigurationError("envelope analysis needs an irregular environment");
  if (spec.dispersion.mode == DiagonalMode::mass_conserving)
    for (const auto& d : spec.dispersion.offdiag)
      if (d && d->modulation.is_irregular())
        throw ConfigurationError(
            "irregular dispersion needs an explicit diagonal: with a mass-conserving diagonal the "
            "envelope problems are not ordered");
  return {detail::envelope_spec(spec, false), detail::envelope_spec(spec, true), epsilon};
}

/// Throws ConfigurationError if an irregular sample leaves its envelope at
/// any half-step time of [0, t_end].
inline void check_envelopes(const ScenarioSpec& spec) {
  const double tol = 1e-12;
  const auto times = detail::half_nodes(spec.grid.t_end, spec.grid.delta);
  spec.for_each_rate([&](const Rate& r) {
    const auto* irr = std::get_if<IrregularModulation>(&r.modulation.kind);
    if (!irr) return;
    for (double t : times) {
      const double lo = evaluate(irr->lo, t);
      const double hi = evaluate(irr->hi, t);
      const double v = r.modulation(t);
      if (lo > hi + tol || v < lo - tol || v > hi + tol)
        throw ConfigurationError("envelope violation at t = " + std::to_string(t));
    }
  });
}

enum class EnvelopeOutcome { extinction, sandwich, indeterminate };

inline const char* to_string(EnvelopeOutcome o) {
  switch (o) {
    case EnvelopeOutcome::extinction: return "extinction";
    case EnvelopeOutcome::sandwich: return "persistence";
    case EnvelopeOutcome::indeterminate: return "indeterminate by this method";
  }
  return "?";
}

struct SandwichReport {
  bool checked = false;
  bool holds = false;
  double window_lo = 0.0;
  double window_hi = 0.0;
  double epsilon = 0.0;      // relative to |rho+|
  double epsilon_abs = 0.0;  // epsilon * |rho+|
  /// Largest violation of each side over the window (<= 0 when it holds).
  double worst_below = 0.0;
  double worst_above = 0.0;
};

struct EnvelopeReport {
  double sigma_minus = 0.0;
  double sigma_plus = 0.0;
  EnvelopeOutcome outcome = EnvelopeOutcome::indeterminate;
  FixedPoint rho_minus;
  FixedPoint rho_plus;
  SandwichReport sandwich;
  Vector final_rho;
  double peak_rho = 0.0;
  MarchResult trajectory;
};

struct EnvelopeOptions {
  double epsilon = 0.05;
  double window_start_fraction = 0.5;
};

inline EnvelopeReport envelope_analysis(const ScenarioSpec& spec, const EnvelopeOptions& opts = {}) {
  check_envelopes(spec);
  const auto pair = make_envelopes(spec, opts.epsilon);
  const DiscreteModel lower(pair.lower);
  const DiscreteModel upper(pair.upper);
  const DiscreteModel actual(spec);

  EnvelopeReport rep;
  const auto op_minus = build_R0_periodic(lower);
  const auto op_plus = build_R0_periodic(upper);
  rep.sigma_minus = op_minus.sigma;
  rep.sigma_plus = op_plus.sigma;

  rep.trajectory = march(actual);
  const auto& rho = rep.trajectory.newborns;
  const long last = static_cast<long>(rho.size()) - 1;
  const auto fin = rho.at(static_cast<std::size_t>(last));
  rep.final_rho.assign(fin.begin(), fin.end());
  rep.peak_rho = max_norm(rho.values);

  if (rep.sigma_plus <= 1.0) {
    rep.outcome = EnvelopeOutcome::extinction;
    return rep;
  }
  if (rep.sigma_minus <= 1.0) {
    rep.outcome = EnvelopeOutcome::indeterminate;
    return rep;
  }

  rep.outcome = EnvelopeOutcome::sandwich;
  rep.rho_minus = solve_rho_star_periodic(lower, op_minus);
  rep.rho_plus = solve_rho_star_periodic(upper, op_plus);

  auto& sw = rep.sandwich;
  sw.checked = true;
  sw.epsilon = opts.epsilon;
  sw.epsilon_abs = opts.epsilon * max_norm(rep.rho_plus.values);
  const long first = static_cast<long>(std::ceil(opts.window_start_fraction * static_cast<double>(last)));
  sw.window_lo = rho.time(static_cast<std::size_t>(first));
  sw.window_hi = rho.time(static_cast<std::size_t>(last));
  sw.worst_below = -std::numeric_limits<double>::infinity();
  sw.worst_above = -std::numeric_limits<double>::infinity();
  const std::size_t n = spec.n_patches();
  for (long t = first; t <= last; ++t) {
    const auto lo = detail::fixed_point_at(rep.rho_minus, n, t);
    const auto hi = detail::fixed_point_at(rep.rho_plus, n, t);
    const auto v = rho.at(static_cast<std::size_t>(t));
    for (std::size_t k = 0; k < n; ++k) {
      sw.worst_below = std::max(sw.worst_below, (lo[k] - sw.epsilon_abs) - v[k]);
      sw.worst_above = std::max(sw.worst_above, v[k] - (hi[k] + sw.epsilon_abs));
    }
  }
  sw.holds = sw.worst_below <= 0.0 && sw.worst_above <= 0.0;
  return rep;
}

}  // namespace agepatch
