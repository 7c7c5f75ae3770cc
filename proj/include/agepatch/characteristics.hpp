#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "agepatch/lattice.hpp"

namespace agepatch {

enum class Dynamics {
  nonlinear,  // -mu (h + h^2 / L) + D h
  linear,     // -mu h + D h
};

/// Negatives down to this magnitude are rounding noise and are clamped.
inline constexpr double kClampTolerance = 1e-12;
/// Values above kBlowupFactor * max(start scale, 1) abort the integration.
inline constexpr double kBlowupFactor = 1e6;

/// Classical fourth-order Runge-Kutta along one characteristic, with the
/// step fixed to the lattice spacing. Reuses its scratch buffers, so one
/// instance per thread.
class CohortStepper {
 public:
  CohortStepper(const DiscreteModel& model, Dynamics dynamics)
      : model_(&model),
        dynamics_(dynamics),
        n_(model.patches()),
        r0_(n_), r1_(n_), r2_(n_),
        k1_(n_), k2_(n_), k3_(n_), k4_(n_), tmp_(n_) {}

  /// Advances h from the lattice point (age_half, time_half) to
  /// (age_half + 2, time_half + 2). `scale` is the size of the cohort's
  /// starting value, used by the blow-up guard.
  void step(std::span<double> h, long age_half, long time_half, double scale) {
    const double dt = model_->delta();
    model_->rates(age_half, time_half, r0_);
    model_->rates(age_half + 1, time_half + 1, r1_);
    model_->rates(age_half + 2, time_half + 2, r2_);

    derivative(r0_, h, k1_);
    for (std::size_t k = 0; k < n_; ++k) tmp_[k] = h[k] + 0.5 * dt * k1_[k];
    derivative(r1_, tmp_, k2_);
    for (std::size_t k = 0; k < n_; ++k) tmp_[k] = h[k] + 0.5 * dt * k2_[k];
    derivative(r1_, tmp_, k3_);
    for (std::size_t k = 0; k < n_; ++k) tmp_[k] = h[k] + dt * k3_[k];
    derivative(r2_, tmp_, k4_);

    const double guard = kBlowupFactor * std::max(scale, 1.0);
    for (std::size_t k = 0; k < n_; ++k) {
      double v = h[k] + dt / 6.0 * (k1_[k] + 2.0 * k2_[k] + 2.0 * k3_[k] + k4_[k]);
      if (!std::isfinite(v) || v > guard)
        throw IntegrationFailure("cohort value " + std::to_string(v) + " exceeds the stability guard at age " +
                                 std::to_string(0.5 * dt * static_cast<double>(age_half + 2)));
      if (v < 0.0) {
        min_raw_ = std::min(min_raw_, v);
        if (v < -kClampTolerance)
          throw IntegrationFailure("cohort value " + std::to_string(v) + " went negative at age " +
                                   std::to_string(0.5 * dt * static_cast<double>(age_half + 2)));
        v = 0.0;
      }
      h[k] = v;
    }
  }

  /// Most negative pre-clamp value seen so far (0 if none).
  double min_raw() const { return min_raw_; }

 private:
  void derivative(const LocalRates& r, std::span<const double> h, std::span<double> out) const {
    for (std::size_t k = 0; k < n_; ++k) {
      double acc = dynamics_ == Dynamics::nonlinear ? -r.mu[k] * (h[k] + h[k] * h[k] * r.inv_L[k])
                                                    : -r.mu[k] * h[k];
      const double* row = r.D.data() + k * n_;
      for (std::size_t j = 0; j < n_; ++j) acc += row[j] * h[j];
      out[k] = acc;
    }
  }

  const DiscreteModel* model_;
  Dynamics dynamics_;
  std::size_t n_;
  LocalRates r0_, r1_, r2_;
  Vector k1_, k2_, k3_, k4_, tmp_;
  double min_raw_ = 0.0;
};

enum class CohortKind {
  phi,  // newborn cohort: age x, time x + y
  psi,  // initial-data cohort: age x + y, time x
};

struct CohortTrajectory {
  CohortKind kind = CohortKind::phi;
  std::vector<double> x_values;
  std::vector<Vector> values;
  double min_raw = 0.0;
};

struct MatrixTrajectory {
  std::vector<double> x_values;
  std::vector<Matrix> matrices;
};

namespace detail {

inline double scale_of(std::span<const double> v) { return max_norm(v); }

inline void check_start(std::span<const double> start, std::size_t n) {
  if (start.size() != n) throw ConfigurationError("start vector has the wrong number of patches");
  for (double v : start)
    if (!(v >= 0.0)) throw ConfigurationError("start vector must be nonnegative");
}

}  // namespace detail

/// Newborn cohort Phi(x, y; rho): born at time index `birth` with
/// h(0) = start, integrated for `steps` lattice steps (age x, time x + y).
inline CohortTrajectory solve_phi(const DiscreteModel& model, std::span<const double> start, long birth,
                                  long steps, Dynamics dynamics = Dynamics::nonlinear) {
  detail::check_start(start, model.patches());
  if (steps < 0 || steps > model.age_steps()) throw ConfigurationError("phi duration must lie in [0, a_max]");
  CohortStepper stepper(model, dynamics);
  CohortTrajectory out;
  out.kind = CohortKind::phi;
  Vector h(start.begin(), start.end());
  const double scale = detail::scale_of(start);
  out.x_values.push_back(0.0);
  out.values.push_back(h);
  for (long s = 0; s < steps; ++s) {
    stepper.step(h, 2 * s, 2 * (birth + s), scale);
    out.x_values.push_back(model.delta() * static_cast<double>(s + 1));
    out.values.push_back(h);
  }
  out.min_raw = stepper.min_raw();
  return out;
}

/// Initial-data cohort Psi(x, y; f): initial age index `age_offset`,
/// h(0) = start, clock time x (age x + y).
inline CohortTrajectory solve_psi(const DiscreteModel& model, std::span<const double> start, long age_offset,
                                  long steps, Dynamics dynamics = Dynamics::nonlinear) {
  detail::check_start(start, model.patches());
  if (age_offset < 0 || steps < 0 || age_offset + steps > model.age_steps())
    throw ConfigurationError("psi cohort must stay within [0, a_max]");
  CohortStepper stepper(model, dynamics);
  CohortTrajectory out;
  out.kind = CohortKind::psi;
  Vector h(start.begin(), start.end());
  const double scale = detail::scale_of(start);
  out.x_values.push_back(0.0);
  out.values.push_back(h);
  for (long s = 0; s < steps; ++s) {
    stepper.step(h, 2 * (age_offset + s), 2 * s, scale);
    out.x_values.push_back(model.delta() * static_cast<double>(s + 1));
    out.values.push_back(h);
  }
  out.min_raw = stepper.min_raw();
  return out;
}

/// E(x) with E' = (-diag(mu) + D) E, E(0) = I, along the newborn
/// characteristic born at time index `birth`. Column j is the linear
/// newborn cohort started from the j-th basis vector.
inline MatrixTrajectory fundamental_matrix(const DiscreteModel& model, long birth, long steps) {
  if (steps < 0 || steps > model.age_steps()) throw ConfigurationError("duration must lie in [0, a_max]");
  const std::size_t n = model.patches();
  CohortStepper stepper(model, Dynamics::linear);
  MatrixTrajectory out;
  std::vector<Vector> columns(n, Vector(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) columns[j][j] = 1.0;
  auto snapshot = [&](long s) {
    Matrix e(n, n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) e(k, j) = columns[j][k];
    out.x_values.push_back(model.delta() * static_cast<double>(s));
    out.matrices.push_back(std::move(e));
  };
  snapshot(0);
  for (long s = 0; s < steps; ++s) {
    for (auto& col : columns) stepper.step(col, 2 * s, 2 * (birth + s), 1.0);
    snapshot(s + 1);
  }
  return out;
}

// Real-valued entry points; y and x_max must lie on the grid.

inline CohortTrajectory solve_phi(const ScenarioSpec& spec, std::span<const double> start, double y,
                                  double x_max, Dynamics dynamics = Dynamics::nonlinear) {
  const DiscreteModel model(spec);
  return solve_phi(model, start, grid_index(y, spec.grid.delta, "y"), grid_index(x_max, spec.grid.delta, "x_max"),
                   dynamics);
}

inline CohortTrajectory solve_psi(const ScenarioSpec& spec, std::span<const double> start, double y,
                                  double x_max, Dynamics dynamics = Dynamics::nonlinear) {
  const DiscreteModel model(spec);
  return solve_psi(model, start, grid_index(y, spec.grid.delta, "y"), grid_index(x_max, spec.grid.delta, "x_max"),
                   dynamics);
}

inline MatrixTrajectory fundamental_matrix(const ScenarioSpec& spec, double y, double x_max) {
  const DiscreteModel model(spec);
  return fundamental_matrix(model, grid_index(y, spec.grid.delta, "y"), grid_index(x_max, spec.grid.delta, "x_max"));
}

}  // namespace agepatch
