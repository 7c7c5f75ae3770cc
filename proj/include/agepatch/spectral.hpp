#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "agepatch/characteristics.hpp"

namespace agepatch {

// ---------------------------------------------------------------------------
// Power iteration
// ---------------------------------------------------------------------------

struct PowerOptions {
  double tolerance = 1e-10;
  int max_iterations = 10000;
};

struct PowerResult {
  double sigma = 0.0;
  Vector perron;  // max component 1
  int iterations = 0;
  bool converged = false;
};

class PowerIterationFailure : public ConvergenceFailure {
 public:
  PowerIterationFailure(const std::string& what, PowerResult last)
      : ConvergenceFailure(what), last_(std::move(last)) {}
  const PowerResult& last_iterate() const { return last_; }

 private:
  PowerResult last_;
};

namespace detail {

/// Plain (shift = 0) or shifted iteration of v <- (A + shift I) v / max.
inline PowerResult power_run(const Matrix& a, double shift, const PowerOptions& opts, int budget) {
  const std::size_t n = a.rows();
  PowerResult r;
  r.perron.assign(n, 1.0);
  double prev = -1.0;
  for (int it = 1; it <= budget; ++it) {
    Vector w = a * r.perron;
    for (std::size_t i = 0; i < n; ++i) w[i] += shift * r.perron[i];
    const double lam = *std::max_element(w.begin(), w.end());
    r.iterations = it;
    if (!(lam > 0.0)) {
      // A v = 0 from a positive v: the dominant eigenvalue is 0.
      r.sigma = 0.0;
      r.converged = shift == 0.0;
      return r;
    }
    for (double& x : w) x /= lam;
    const double dv = max_abs_diff(w, r.perron);
    r.perron = std::move(w);
    r.sigma = lam - shift;
    if (prev >= 0.0 && std::abs(lam - prev) < opts.tolerance * std::max(1.0, lam) && dv < opts.tolerance) {
      r.converged = true;
      return r;
    }
    prev = lam;
  }
  return r;
}

}  // namespace detail

/// Dominant eigenvalue and eigenvector of a nonnegative square matrix,
/// starting from the all-ones vector. If the plain iteration stalls (an
/// imprimitive matrix oscillates), it is rerun on A + sigma_est I, whose
/// dominant eigenvalue is strictly dominant for irreducible A.
inline PowerResult power_iteration(const Matrix& a, const PowerOptions& opts = {}) {
  if (a.rows() != a.cols() || a.rows() == 0) throw ConfigurationError("power_iteration: matrix must be square");
  for (double x : a.data())
    if (!(x >= 0.0)) throw ConfigurationError("power_iteration: matrix must be nonnegative");
  const int half = std::max(1, opts.max_iterations / 2);
  auto r = detail::power_run(a, 0.0, opts, half);
  if (r.converged) return r;
  const double shift = std::max(r.sigma, 1e-300);
  auto s = detail::power_run(a, shift, opts, opts.max_iterations - half);
  s.iterations += r.iterations;
  if (!s.converged) throw PowerIterationFailure("power iteration did not converge", s);
  return s;
}

// ---------------------------------------------------------------------------
// Net reproductive operators
// ---------------------------------------------------------------------------

enum class OperatorKind { constant, periodic };

struct ReproductiveOperator {
  OperatorKind kind = OperatorKind::constant;
  Matrix matrix;
  double sigma = 0.0;
  /// constant: N values; periodic: phase-major, perron[p * N + k].
  Vector perron;
  long phases = 1;
  int iterations = 0;

  std::size_t patches() const { return static_cast<std::size_t>(matrix.rows() / static_cast<std::size_t>(phases)); }
};

namespace detail {

inline void require_environment(const DiscreteModel& model, Environment env, const char* op) {
  if (model.environment() != env)
    throw ConfigurationError(std::string(op) + " requires a " + to_string(env) + " environment, got " +
                             to_string(model.environment()));
}

inline void finish(ReproductiveOperator& op) {
  const auto pr = power_iteration(op.matrix);
  op.sigma = pr.sigma;
  op.perron = pr.perron;
  op.iterations = pr.iterations;
}

}  // namespace detail

/// R0 = int_0^{a_max} diag(m(a)) E(a) da (trapezoid), E the fundamental
/// matrix of the linearized cohort equations.
inline ReproductiveOperator build_R0(const DiscreteModel& model) {
  detail::require_environment(model, Environment::constant, "build_R0");
  const std::size_t n = model.patches();
  const long na = model.age_steps();
  const auto e = fundamental_matrix(model, 0, na);
  ReproductiveOperator op;
  op.kind = OperatorKind::constant;
  op.matrix = Matrix(n, n);
  for (long i = 0; i <= na; ++i) {
    const double w = trapezoid_weight(i, na, model.delta());
    const auto& ei = e.matrices[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < n; ++k) {
      const double wm = w * model.birth(k, i, 0);
      if (wm == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) op.matrix(k, j) += wm * ei(k, j);
    }
  }
  detail::finish(op);
  return op;
}

/// Periodic net reproductive operator collocated at the M phases
/// t_p = p delta of one period. Block (p, q) collects every age a_i with
/// q + i = p (mod M): the cohort born at phase q reproduces at phase p.
inline ReproductiveOperator build_R0_periodic(const DiscreteModel& model) {
  detail::require_environment(model, Environment::periodic, "build_R0_periodic");
  const std::size_t n = model.patches();
  const long na = model.age_steps();
  const long mph = model.period_steps();
  ReproductiveOperator op;
  op.kind = OperatorKind::periodic;
  op.phases = mph;
  op.matrix = Matrix(n * static_cast<std::size_t>(mph), n * static_cast<std::size_t>(mph));
  CohortStepper stepper(model, Dynamics::linear);
  std::vector<Vector> columns(n, Vector(n));
  for (long q = 0; q < mph; ++q) {
    for (std::size_t j = 0; j < n; ++j) {
      std::fill(columns[j].begin(), columns[j].end(), 0.0);
      columns[j][j] = 1.0;
    }
    for (long i = 0; i <= na; ++i) {
      if (i > 0)
        for (auto& col : columns) stepper.step(col, 2 * (i - 1), 2 * (q + i - 1), 1.0);
      const long p = (q + i) % mph;
      const double w = trapezoid_weight(i, na, model.delta());
      for (std::size_t k = 0; k < n; ++k) {
        const double wm = w * model.birth(k, i, q + i);
        if (wm == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j)
          op.matrix(static_cast<std::size_t>(p) * n + k, static_cast<std::size_t>(q) * n + j) += wm * columns[j][k];
      }
    }
  }
  detail::finish(op);
  return op;
}

// ---------------------------------------------------------------------------
// Nonlinear maps
// ---------------------------------------------------------------------------

/// Kbar rho = int_0^{a_max} m(a) Phi(a; rho) da for a constant newborn
/// vector rho (constant environment).
inline Vector apply_Kbar(const DiscreteModel& model, std::span<const double> rho) {
  detail::require_environment(model, Environment::constant, "apply_Kbar");
  detail::check_start(rho, model.patches());
  const std::size_t n = model.patches();
  const long na = model.age_steps();
  CohortStepper stepper(model, Dynamics::nonlinear);
  Vector h(rho.begin(), rho.end());
  const double scale = max_norm(rho);
  Vector out(n, 0.0);
  for (long i = 0; i <= na; ++i) {
    if (i > 0) stepper.step(h, 2 * (i - 1), 2 * (i - 1), scale);
    const double w = trapezoid_weight(i, na, model.delta());
    for (std::size_t k = 0; k < n; ++k) out[k] += w * model.birth(k, i, 0) * h[k];
  }
  return out;
}

/// Periodic counterpart of Kbar: rho is a T-periodic newborn trajectory
/// sampled at the M phases (phase-major), and so is the result.
inline Vector apply_K_periodic(const DiscreteModel& model, std::span<const double> rho) {
  detail::require_environment(model, Environment::periodic, "apply_K_periodic");
  const std::size_t n = model.patches();
  const long na = model.age_steps();
  const long mph = model.period_steps();
  if (rho.size() != n * static_cast<std::size_t>(mph))
    throw ConfigurationError("apply_K_periodic: expected N values per phase");
  for (double v : rho)
    if (!(v >= 0.0)) throw ConfigurationError("apply_K_periodic: rho must be nonnegative");
  CohortStepper stepper(model, Dynamics::nonlinear);
  Vector out(rho.size(), 0.0);
  Vector h(n);
  for (long q = 0; q < mph; ++q) {
    const auto start = rho.subspan(static_cast<std::size_t>(q) * n, n);
    std::copy(start.begin(), start.end(), h.begin());
    const double scale = max_norm(start);
    for (long i = 0; i <= na; ++i) {
      if (i > 0) stepper.step(h, 2 * (i - 1), 2 * (q + i - 1), scale);
      const auto p = static_cast<std::size_t>((q + i) % mph);
      const double w = trapezoid_weight(i, na, model.delta());
      for (std::size_t k = 0; k < n; ++k) out[p * n + k] += w * model.birth(k, i, q + i) * h[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixed points
// ---------------------------------------------------------------------------

enum class FixedPointKind { stationary, periodic };

struct FixedPoint {
  FixedPointKind kind = FixedPointKind::stationary;
  /// stationary: N values; periodic: phase-major M * N values.
  Vector values;
  long phases = 1;
  bool converged = false;
  int iterations = 0;
};

struct FixedPointOptions {
  double rtol = 1e-8;
  double atol = 1e-12;
  double lower_seed = 1e-6;
  int max_iterations = 10000;
  int max_doublings = 200;
};

/// Two-sided monotone iteration for a monotone, sublinear map with a
/// positive fixed point: a lower iterate from lower_seed * perron rises and
/// an upper iterate from c * perron (c doubled until map(c p) <= c p)
/// falls. Stops when they agree to rtol/atol and returns the midpoint.
template <class Map>
FixedPoint monotone_bracket(Map&& map, const Vector& perron, const FixedPointOptions& opts = {}) {
  FixedPoint fp;
  Vector lower = scaled(perron, opts.lower_seed);
  Vector upper;
  double c = 1.0;
  for (int d = 0;; ++d) {
    if (d > opts.max_doublings) throw NumericalInconsistency("no upper bracket found: map is not sublinear");
    upper = scaled(perron, c);
    if (all_leq(map(upper), upper)) break;
    c *= 2.0;
  }
  for (int it = 1; it <= opts.max_iterations; ++it) {
    lower = map(lower);
    upper = map(upper);
    fp.iterations = it;
    bool done = true;
    for (std::size_t i = 0; i < lower.size(); ++i) {
      const double tol = opts.rtol * std::abs(upper[i]) + opts.atol;
      if (lower[i] > upper[i] + tol)
        throw NumericalInconsistency("fixed-point bracket crossed: lower iterate exceeds upper iterate");
      done = done && (upper[i] - lower[i] <= tol);
    }
    if (done) {
      fp.converged = true;
      break;
    }
  }
  fp.values.resize(lower.size());
  for (std::size_t i = 0; i < lower.size(); ++i) fp.values[i] = 0.5 * (lower[i] + upper[i]);
  return fp;
}

/// Nontrivial solution of rho = Kbar rho if sigma(R0) > 1, else 0.
inline FixedPoint solve_rho_star(const DiscreteModel& model, const ReproductiveOperator& r0,
                                 const FixedPointOptions& opts = {}) {
  detail::require_environment(model, Environment::constant, "solve_rho_star");
  const std::size_t n = model.patches();
  if (r0.sigma <= 1.0) {
    FixedPoint fp;
    fp.values.assign(n, 0.0);
    fp.converged = true;
    return fp;
  }
  auto fp = monotone_bracket([&](const Vector& rho) { return apply_Kbar(model, rho); }, r0.perron, opts);
  fp.kind = FixedPointKind::stationary;
  return fp;
}

inline FixedPoint solve_rho_star(const DiscreteModel& model, const FixedPointOptions& opts = {}) {
  return solve_rho_star(model, build_R0(model), opts);
}

/// T-periodic solution of rho = K~ rho if sigma(R~0) > 1, else 0.
inline FixedPoint solve_rho_star_periodic(const DiscreteModel& model, const ReproductiveOperator& r0,
                                          const FixedPointOptions& opts = {}) {
  detail::require_environment(model, Environment::periodic, "solve_rho_star_periodic");
  const std::size_t size = model.patches() * static_cast<std::size_t>(model.period_steps());
  FixedPoint fp;
  if (r0.sigma <= 1.0) {
    fp.values.assign(size, 0.0);
    fp.converged = true;
  } else {
    fp = monotone_bracket([&](const Vector& rho) { return apply_K_periodic(model, rho); }, r0.perron, opts);
  }
  fp.kind = FixedPointKind::periodic;
  fp.phases = model.period_steps();
  return fp;
}

inline FixedPoint solve_rho_star_periodic(const DiscreteModel& model, const FixedPointOptions& opts = {}) {
  return solve_rho_star_periodic(model, build_R0_periodic(model), opts);
}

}  // namespace agepatch
