#pragma once

// Scenario builders and independent oracles shared by the unit and
// acceptance suites. Nothing here calls the solvers under test.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "agepatch/agepatch.hpp"

namespace agepatch::testing {

inline AgeTimeGrid grid(double delta, double a_max, double t_end, std::optional<double> period = std::nullopt) {
  return AgeTimeGrid{delta, a_max, t_end, period};
}

inline ScenarioSpec one_patch(double mu, double m, double L, AgeTimeGrid g,
                              RateProfile initial = RateProfile::constant(10.0)) {
  ScenarioSpec s;
  s.grid = g;
  s.patches.push_back({Rate::constant(mu), Rate::constant(m), Rate::constant(L), std::move(initial)});
  s.dispersion = DispersionSpec::none(1);
  return s;
}

/// Two identical patches exchanging individuals at rate d in both
/// directions (mass conserving).
inline ScenarioSpec symmetric_pair(double mu, double m, double L, double d, AgeTimeGrid g) {
  ScenarioSpec s;
  s.grid = g;
  for (int k = 0; k < 2; ++k)
    s.patches.push_back({Rate::constant(mu), Rate::constant(m), Rate::constant(L), RateProfile::constant(10.0)});
  s.dispersion = DispersionSpec::none(2);
  if (d > 0.0) {
    s.dispersion.set(0, 1, Rate::constant(d));
    s.dispersion.set(1, 0, Rate::constant(d));
  }
  return s;
}

/// Source patch (mu 0.5, m 1, isolated rate 2) feeding a sink (mu 1, m 0.5,
/// isolated rate 0.5) at rate d, with a weak return flow so that the
/// pattern is essentially positive.
inline ScenarioSpec source_sink(AgeTimeGrid g, double d = 0.1, double back = 0.05, double L = 100.0) {
  ScenarioSpec s;
  s.grid = g;
  s.patches.push_back({Rate::constant(0.5), Rate::constant(1.0), Rate::constant(L), RateProfile::window(5.0, 0.0, 10.0)});
  s.patches.push_back({Rate::constant(1.0), Rate::constant(0.5), Rate::constant(L), RateProfile::constant(0.0)});
  s.dispersion = DispersionSpec::none(2);
  s.dispersion.set(1, 0, Rate::constant(d));
  s.dispersion.set(0, 1, Rate::constant(back));
  return s;
}

/// Random validated constant scenario with 1..max_patches patches and a
/// strongly connected dispersal pattern (a directed cycle plus random extra
/// edges).
inline ScenarioSpec random_constant(std::mt19937_64& rng, AgeTimeGrid g, int max_patches = 4) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick_n(1, max_patches);
  const int n = pick_n(rng);
  ScenarioSpec s;
  s.grid = g;
  for (int k = 0; k < n; ++k) {
    const double mu = 0.3 + 1.2 * u(rng);
    const double m_val = 2.5 * u(rng);
    const double lo = 3.0 * u(rng);
    const double hi = lo + 2.0 + 12.0 * u(rng);
    const double L = 10.0 + 990.0 * u(rng);
    const double f = 20.0 * u(rng);
    s.patches.push_back({Rate::constant(mu), Rate{RateProfile::window(m_val, lo, hi)}, Rate::constant(L),
                         RateProfile::window(f + 0.5, 0.0, 5.0 + 10.0 * u(rng))});
  }
  s.dispersion = DispersionSpec::none(static_cast<std::size_t>(n));
  if (n > 1) {
    for (int k = 0; k < n; ++k) s.dispersion.set(static_cast<std::size_t>((k + 1) % n), static_cast<std::size_t>(k), Rate::constant(0.02 + 0.4 * u(rng)));
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        if (k != j && (j + 1) % n != k && u(rng) < 0.3)
          s.dispersion.set(static_cast<std::size_t>(k), static_cast<std::size_t>(j), Rate::constant(0.4 * u(rng)));
  }
  return s;
}

/// Root x > 0 of ln(1 + x) / x = target (0 < target < 1) by bisection; the
/// left side decreases from 1 to 0.
inline double log_ratio_root(double target) {
  auto g = [&](double x) { return std::log1p(x) / x - target; };
  double lo = 1e-12;
  double hi = 1.0;
  while (g(hi) > 0.0) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Scalar cohort with constant mu and L: u = 1/h linearizes the ODE.
inline double logistic_cohort(double start, double mu, double L, double a) {
  const double e = std::exp(-mu * a);
  return start * e / (1.0 + start / L * (1.0 - e));
}

/// Spectral radius from a dense full-spectrum eigensolve.
inline double dense_spectral_radius(const Matrix& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a(r, c);
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  double best = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) best = std::max(best, std::abs(es.eigenvalues()[i]));
  return best;
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + h * i);
  return acc * h / 3.0;
}

}  // namespace agepatch::testing
