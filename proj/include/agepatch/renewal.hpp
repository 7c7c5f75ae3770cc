#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "agepatch/characteristics.hpp"

namespace agepatch {

/// Per-patch values on the time grid t_i = i * delta, stored row-major
/// [time][patch].
struct TimeSeries {
  double delta = 0.0;
  std::size_t patches = 0;
  std::vector<double> values;

  TimeSeries() = default;
  TimeSeries(double d, std::size_t n) : delta(d), patches(n) {}

  std::size_t size() const { return patches == 0 ? 0 : values.size() / patches; }
  double time(std::size_t i) const { return delta * static_cast<double>(i); }
  std::span<const double> at(std::size_t i) const { return {values.data() + i * patches, patches}; }
  std::span<double> at(std::size_t i) { return {values.data() + i * patches, patches}; }
  void push_back(std::span<const double> v) { values.insert(values.end(), v.begin(), v.end()); }

  bool operator==(const TimeSeries&) const = default;
};

/// rho_k(t) = n_k(0, t).
using NewbornTrajectory = TimeSeries;
/// N_k(t) = integral of n_k(a, t) over ages.
using PopulationSeries = TimeSeries;

/// n_k(a_i, t_n) on the full lattice, stored [time][age][patch].
struct PopulationField {
  double delta = 0.0;
  long age_nodes = 0;
  long time_nodes = 0;
  std::size_t patches = 0;
  std::vector<double> values;

  double operator()(std::size_t k, long age, long time) const {
    return values[(static_cast<std::size_t>(time) * static_cast<std::size_t>(age_nodes) +
                   static_cast<std::size_t>(age)) * patches + k];
  }
  std::span<const double> at(long age, long time) const {
    return {values.data() + (static_cast<std::size_t>(time) * static_cast<std::size_t>(age_nodes) +
                             static_cast<std::size_t>(age)) * patches,
            patches};
  }
};

/// Age profile n_k(., t) at one grid time.
struct FieldSnapshot {
  long time_index = 0;
  double time = 0.0;
  Matrix values;  // (a_max/delta + 1) x N
};

/// (K rho)_k(t_n) = int_0^t m_k(a, t) Phi_k(a, t - a; rho) da by trapezoid.
/// Only rho(t_0..t_n) is read. Every cohort is integrated from scratch,
/// which is O(n^2); march() does the same incrementally.
inline Vector apply_K(const DiscreteModel& model, const NewbornTrajectory& rho, long n) {
  const std::size_t np = model.patches();
  if (n < 0 || n > model.time_steps()) throw ConfigurationError("apply_K: time index outside the grid");
  if (rho.patches != np || static_cast<long>(rho.size()) <= n)
    throw ConfigurationError("apply_K: newborn trajectory must cover [0, t]");
  Vector out(np, 0.0);
  const long upper = std::min(n, model.age_steps());
  if (upper == 0) return out;
  CohortStepper stepper(model, Dynamics::nonlinear);
  Vector h(np);
  for (long i = 0; i <= upper; ++i) {
    const long birth = n - i;
    const auto start = rho.at(static_cast<std::size_t>(birth));
    std::copy(start.begin(), start.end(), h.begin());
    const double scale = max_norm(start);
    for (long s = 0; s < i; ++s) stepper.step(h, 2 * s, 2 * (birth + s), scale);
    const double w = trapezoid_weight(i, upper, model.delta());
    for (std::size_t k = 0; k < np; ++k) out[k] += w * model.birth(k, i, n) * h[k];
  }
  return out;
}

/// (F f)_k(t_n) = int_t^{a_max} m_k(a, t) Psi_k(t, a - t; f) da by
/// trapezoid; the initial cohort of age a - t at time 0 has age a at t.
inline Vector apply_F(const DiscreteModel& model, std::span<const RateProfile> f, long n) {
  const std::size_t np = model.patches();
  if (n < 0 || n > model.time_steps()) throw ConfigurationError("apply_F: time index outside the grid");
  if (f.size() != np) throw ConfigurationError("apply_F: one initial profile per patch required");
  Vector out(np, 0.0);
  const long na = model.age_steps();
  if (n >= na) return out;
  CohortStepper stepper(model, Dynamics::nonlinear);
  Vector h(np);
  for (long i = n; i <= na; ++i) {
    const long offset = i - n;
    for (std::size_t k = 0; k < np; ++k) h[k] = f[k](model.delta() * static_cast<double>(offset));
    const double scale = max_norm(h);
    for (long s = 0; s < n; ++s) stepper.step(h, 2 * (offset + s), 2 * s, scale);
    const double w = trapezoid_weight(offset, na - n, model.delta());
    for (std::size_t k = 0; k < np; ++k) out[k] += w * model.birth(k, i, n) * h[k];
  }
  return out;
}

inline Vector apply_F(const DiscreteModel& model, long n) {
  std::vector<RateProfile> f;
  for (const auto& p : model.spec().patches) f.push_back(p.initial);
  return apply_F(model, f, n);
}

struct MarchOptions {
  bool store_field = false;
  std::vector<long> snapshot_indices;
};

struct MarchResult {
  NewbornTrajectory newborns;
  PopulationSeries totals;
  std::optional<PopulationField> field;
  std::vector<FieldSnapshot> snapshots;
  /// Most negative pre-clamp cohort value (0 if none).
  double min_raw = 0.0;
};

/// Solves rho = K rho + F f forward in time on the lattice.
///
/// At t_n the trapezoid node a = 0 of K contains rho(t_n) itself with
/// weight delta/2, so each step solves
///   rho_k(t_n) (1 - delta/2 m_k(0, t_n)) = (rest of K)_k + (F f)_k.
/// Newborn cohorts are kept in a ring buffer and advanced one step per time
/// step; initial-data cohorts likewise until they pass a_max.
inline MarchResult march(const DiscreteModel& model, const MarchOptions& opts = {}) {
  const std::size_t np = model.patches();
  const long na = model.age_steps();
  const long nt = model.time_steps();
  const double dt = model.delta();

  for (long n = 1; n <= nt; ++n)
    for (std::size_t k = 0; k < np; ++k)
      if (0.5 * dt * model.birth(k, 0, n) >= 1.0)
        throw ConfigurationError("step infeasible: delta * m(0, t) / 2 >= 1; refine delta");

  MarchResult res;
  res.newborns = TimeSeries(dt, np);
  res.totals = TimeSeries(dt, np);
  res.newborns.values.reserve(static_cast<std::size_t>(nt + 1) * np);
  res.totals.values.reserve(static_cast<std::size_t>(nt + 1) * np);
  if (opts.store_field) {
    PopulationField f;
    f.delta = dt;
    f.age_nodes = na + 1;
    f.time_nodes = nt + 1;
    f.patches = np;
    f.values.assign(static_cast<std::size_t>((na + 1) * (nt + 1)) * np, 0.0);
    res.field = std::move(f);
  }
  const std::set<long> snapshot_at(opts.snapshot_indices.begin(), opts.snapshot_indices.end());

  CohortStepper phi_stepper(model, Dynamics::nonlinear);
  CohortStepper psi_stepper(model, Dynamics::nonlinear);

  const auto ring = static_cast<std::size_t>(na + 1);
  std::vector<double> phi(ring * np, 0.0);
  std::vector<double> phi_scale(ring, 0.0);
  auto phi_state = [&](long birth) {
    return std::span<double>(phi.data() + static_cast<std::size_t>(birth) % ring * np, np);
  };

  std::vector<double> psi(static_cast<std::size_t>(na + 1) * np);
  std::vector<double> psi_scale(static_cast<std::size_t>(na + 1));
  for (long j = 0; j <= na; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < np; ++k) {
      const double v = model.initial(k, j);
      psi[static_cast<std::size_t>(j) * np + k] = v;
      s = std::max(s, v);
    }
    psi_scale[static_cast<std::size_t>(j)] = s;
  }
  auto psi_state = [&](long j) { return std::span<double>(psi.data() + static_cast<std::size_t>(j) * np, np); };

  // Value of the field at (age i, time n) once cohorts sit at time n.
  auto field_value = [&](long i, long n) -> std::span<const double> {
    if (i < n) return phi_state(n - i);
    return psi_state(i - n);
  };

  Vector rho(np);
  Vector total(np);
  for (long n = 0; n <= nt; ++n) {
    if (n > 0) {
      for (long b = std::max(0L, n - na); b < n; ++b)
        phi_stepper.step(phi_state(b), 2 * (n - 1 - b), 2 * (n - 1), phi_scale[static_cast<std::size_t>(b) % ring]);
      for (long j = 0; j <= na - n; ++j)
        psi_stepper.step(psi_state(j), 2 * (j + n - 1), 2 * (n - 1), psi_scale[static_cast<std::size_t>(j)]);
    }

    std::fill(rho.begin(), rho.end(), 0.0);
    if (n < na) {
      for (long i = n; i <= na; ++i) {
        const double w = trapezoid_weight(i - n, na - n, dt);
        const auto h = psi_state(i - n);
        for (std::size_t k = 0; k < np; ++k) rho[k] += w * model.birth(k, i, n) * h[k];
      }
    }
    if (n > 0) {
      const long upper = std::min(n, na);
      for (long i = 1; i <= upper; ++i) {
        const double w = trapezoid_weight(i, upper, dt);
        const auto h = phi_state(n - i);
        for (std::size_t k = 0; k < np; ++k) rho[k] += w * model.birth(k, i, n) * h[k];
      }
      const double w0 = trapezoid_weight(0, upper, dt);
      for (std::size_t k = 0; k < np; ++k) rho[k] /= (1.0 - w0 * model.birth(k, 0, n));
    }

    auto fresh = phi_state(n);
    std::copy(rho.begin(), rho.end(), fresh.begin());
    phi_scale[static_cast<std::size_t>(n) % ring] = max_norm(rho);
    res.newborns.push_back(rho);

    // n(0, 0) is f(0): the lattice assigns the diagonal a = t to the
    // initial-data side.
    std::fill(total.begin(), total.end(), 0.0);
    for (long i = 0; i <= na; ++i) {
      const double w = trapezoid_weight(i, na, dt);
      const auto v = field_value(i, n);
      for (std::size_t k = 0; k < np; ++k) total[k] += w * v[k];
    }
    res.totals.push_back(total);

    if (res.field) {
      auto* dst = res.field->values.data() + static_cast<std::size_t>(n) * static_cast<std::size_t>(na + 1) * np;
      for (long i = 0; i <= na; ++i) {
        const auto v = field_value(i, n);
        std::copy(v.begin(), v.end(), dst + static_cast<std::size_t>(i) * np);
      }
    }
    if (snapshot_at.count(n)) {
      FieldSnapshot snap{n, dt * static_cast<double>(n), Matrix(static_cast<std::size_t>(na + 1), np)};
      for (long i = 0; i <= na; ++i) {
        const auto v = field_value(i, n);
        for (std::size_t k = 0; k < np; ++k) snap.values(static_cast<std::size_t>(i), k) = v[k];
      }
      res.snapshots.push_back(std::move(snap));
    }
  }
  res.min_raw = std::min(phi_stepper.min_raw(), psi_stepper.min_raw());
  return res;
}

/// Trapezoid over ages of a stored field.
inline PopulationSeries total_population(const PopulationField& field) {
  PopulationSeries out(field.delta, field.patches);
  const long last = field.age_nodes - 1;
  Vector total(field.patches);
  for (long n = 0; n < field.time_nodes; ++n) {
    std::fill(total.begin(), total.end(), 0.0);
    for (long i = 0; i <= last; ++i) {
      const double w = trapezoid_weight(i, last, field.delta);
      const auto v = field.at(i, n);
      for (std::size_t k = 0; k < field.patches; ++k) total[k] += w * v[k];
    }
    out.push_back(total);
  }
  return out;
}

}  // namespace agepatch
