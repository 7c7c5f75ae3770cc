#pragma once

#include <string>
#include <vector>

#include "agepatch/scenario.hpp"

namespace agepatch {

/// Rates at one lattice point, laid out for the cohort integrator.
struct LocalRates {
  Vector mu;
  Vector inv_L;
  Vector D;  // N*N row-major, diagonal included

  explicit LocalRates(std::size_t n = 0) : mu(n), inv_L(n), D(n * n) {}
};

/// Scenario coefficients sampled on the half-step lattice
/// (a, t) = (i delta/2, n delta/2), which is every point a fourth-order
/// Runge-Kutta step of size delta touches.
///
/// Each rate is profile(a) * modulation(t), so the age and time factors are
/// tabulated separately. Time slots depend on the environment: one slot for
/// constant, 2M wrapped slots for periodic, 2 t_end/delta + 1 for irregular.
class DiscreteModel {
 public:
  explicit DiscreteModel(ScenarioSpec spec) : spec_(std::move(spec)) {
    const auto& g = spec_.grid;
    n_ = spec_.n_patches();
    delta_ = g.delta;
    age_steps_ = g.age_steps();
    time_steps_ = g.time_steps();
    period_steps_ = g.period_steps();
    if (age_steps_ <= 0 || time_steps_ <= 0)
      throw ConfigurationError("grid: a_max and t_end must be positive multiples of delta");
    switch (spec_.environment) {
      case Environment::constant: slots_ = 1; break;
      case Environment::periodic:
        if (period_steps_ <= 0) throw ConfigurationError("periodic environment needs grid.period = M * delta");
        slots_ = 2 * period_steps_;
        break;
      case Environment::irregular: slots_ = 2 * time_steps_ + 1; break;
    }
    if (spec_.dispersion.offdiag.size() != n_ * n_)
      throw ConfigurationError("dispersion table must be N x N");

    for (const auto& p : spec_.patches) {
      mu_.push_back(tabulate(p.mu));
      m_.push_back(tabulate(p.m));
      L_.push_back(tabulate(p.L));
    }
    offdiag_.resize(n_ * n_);
    has_offdiag_.assign(n_ * n_, false);
    for (std::size_t i = 0; i < n_ * n_; ++i)
      if (const auto& r = spec_.dispersion.offdiag[i]; r && (i / n_) != (i % n_)) {
        offdiag_[i] = tabulate(*r);
        has_offdiag_[i] = true;
      }
    explicit_diag_ = spec_.dispersion.mode == DiagonalMode::explicit_outflow;
    if (explicit_diag_) {
      if (spec_.dispersion.outflow.size() != n_)
        throw ConfigurationError("explicit diagonal mode needs one outflow rate per patch");
      for (const auto& r : spec_.dispersion.outflow) outflow_.push_back(tabulate(r));
    }
  }

  const ScenarioSpec& spec() const { return spec_; }
  std::size_t patches() const { return n_; }
  double delta() const { return delta_; }
  long age_steps() const { return age_steps_; }
  long time_steps() const { return time_steps_; }
  long period_steps() const { return period_steps_; }
  Environment environment() const { return spec_.environment; }

  /// Maps a time half-index to its table slot.
  std::size_t time_slot(long half) const {
    switch (spec_.environment) {
      case Environment::constant: return 0;
      case Environment::periodic: return static_cast<std::size_t>(detail::floor_mod(half, slots_));
      case Environment::irregular:
        if (half < 0 || half >= slots_)
          throw ConfigurationError("time " + std::to_string(0.5 * delta_ * static_cast<double>(half)) +
                                   " outside [0, t_end] of an irregular environment");
        return static_cast<std::size_t>(half);
    }
    return 0;
  }

  /// Fills mu, 1/L and D at (age_half * delta/2, time_half * delta/2).
  void rates(long age_half, long time_half, LocalRates& out) const {
    const auto ia = static_cast<std::size_t>(age_half);
    const std::size_t it = time_slot(time_half);
    for (std::size_t k = 0; k < n_; ++k) {
      out.mu[k] = mu_[k].at(ia, it);
      out.inv_L[k] = 1.0 / L_[k].at(ia, it);
    }
    for (std::size_t i = 0; i < n_ * n_; ++i) out.D[i] = has_offdiag_[i] ? offdiag_[i].at(ia, it) : 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
      double diag = 0.0;
      if (explicit_diag_) {
        diag = -outflow_[k].at(ia, it);
      } else {
        for (std::size_t j = 0; j < n_; ++j)
          if (j != k) diag -= out.D[j * n_ + k];
      }
      out.D[k * n_ + k] = diag;
    }
  }

  /// m_k at lattice node (age_index * delta, time_index * delta).
  double birth(std::size_t k, long age_index, long time_index) const {
    return m_[k].at(static_cast<std::size_t>(2 * age_index), time_slot(2 * time_index));
  }

  /// mu_k and |D_kk| at a half-index point; used by the isolated-patch
  /// survival integrals.
  double mortality(std::size_t k, long age_half, long time_half) const {
    return mu_[k].at(static_cast<std::size_t>(age_half), time_slot(time_half));
  }
  double outflow(std::size_t k, long age_half, long time_half) const {
    const auto ia = static_cast<std::size_t>(age_half);
    const std::size_t it = time_slot(time_half);
    if (explicit_diag_) return outflow_[k].at(ia, it);
    double out = 0.0;
    for (std::size_t j = 0; j < n_; ++j)
      if (j != k && has_offdiag_[j * n_ + k]) out += offdiag_[j * n_ + k].at(ia, it);
    return out;
  }

  /// Initial density f_k at age node i.
  double initial(std::size_t k, long age_index) const {
    return spec_.patches[k].initial(static_cast<double>(age_index) * delta_);
  }

 private:
  struct Factor {
    std::vector<double> age;
    std::vector<double> time;
    double at(std::size_t ia, std::size_t it) const { return age[ia] * time[it]; }
  };

  Factor tabulate(const Rate& r) const {
    Factor f;
    f.age.resize(static_cast<std::size_t>(2 * age_steps_ + 1));
    for (std::size_t i = 0; i < f.age.size(); ++i) f.age[i] = r.profile(0.5 * delta_ * static_cast<double>(i));
    f.time.resize(static_cast<std::size_t>(slots_));
    for (std::size_t i = 0; i < f.time.size(); ++i) f.time[i] = r.modulation(0.5 * delta_ * static_cast<double>(i));
    return f;
  }

  ScenarioSpec spec_;
  std::size_t n_ = 0;
  double delta_ = 0.0;
  long age_steps_ = 0;
  long time_steps_ = 0;
  long period_steps_ = 0;
  long slots_ = 1;
  std::vector<Factor> mu_, m_, L_, offdiag_, outflow_;
  std::vector<bool> has_offdiag_;
  bool explicit_diag_ = false;
};

/// Converts a real age/time to a lattice index, rejecting off-grid values.
inline long grid_index(double x, double delta, const char* what) {
  const double r = x / delta;
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-9 * std::max(1.0, std::abs(r)))
    throw ConfigurationError(std::string(what) + " " + std::to_string(x) + " is not on the grid");
  return static_cast<long>(n);
}

}  // namespace agepatch
