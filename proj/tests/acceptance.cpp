// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs at desk scale (delta 0.02, a_max 40).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "agepatch/cli.hpp"
#include "fixtures.hpp"

namespace {

using namespace agepatch;
using testing::grid;
using testing::one_patch;

constexpr double kDelta = 0.02;
constexpr double kAmax = 40.0;

AgeTimeGrid desk(double t_end, std::optional<double> period = std::nullopt) {
  return grid(kDelta, kAmax, t_end, period);
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) {
    if (pass) detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

/// Randomized validated constant scenarios shared by criteria 3, 5 and 8.
std::vector<ScenarioSpec> random_suite(double t_end, int count = 24) {
  std::mt19937_64 rng(2024);
  std::vector<ScenarioSpec> out;
  while (static_cast<int>(out.size()) < count) {
    auto s = testing::random_constant(rng, desk(t_end));
    if (!has_errors(validate_scenario(s))) out.push_back(std::move(s));
  }
  return out;
}

Outcome criterion1() {
  Outcome o;
  std::vector<double> err;
  for (double d : {0.04, 0.02, 0.01}) {
    const double sigma = build_R0(DiscreteModel(one_patch(0.5, 1.0, 100.0, grid(d, kAmax, 1.0)))).sigma;
    err.push_back(rel(sigma, 2.0));
  }
  o.require(err[1] <= 1e-4, "relative error " + fmt("%.3g", err[1]) + " > 1e-4");
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    const double ratio = err[i] / err[i + 1];
    o.require(ratio > 3.5 && ratio < 4.5, "error ratio " + fmt("%.3f", ratio) + " not ~4");
    o.note("ratio " + fmt("%.3f", ratio));
  }
  o.note("rel err " + fmt("%.2e", err[1]));
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto fp = solve_rho_star(DiscreteModel(one_patch(0.5, 1.0, 100.0, desk(1.0))));
  const double target = 100.0 * testing::log_ratio_root(0.5);
  const double e = rel(fp.values[0], target);
  o.require(fp.converged, "fixed point did not converge");
  o.require(e <= 1e-3, "relative error " + fmt("%.3g", e) + " > 1e-3");
  o.note("rho* " + fmt("%.6f", fp.values[0]) + " vs root " + fmt("%.6f", target) + ", rel err " + fmt("%.2e", e));
  return o;
}

Outcome criterion3() {
  Outcome o;
  int below = 0;
  int above = 0;
  for (const auto& s : random_suite(1.0)) {
    const DiscreteModel model(s);
    const auto op = build_R0(model);
    const auto fp = solve_rho_star(model, op);
    bool all_zero = true;
    bool all_positive = true;
    for (double v : fp.values) {
      all_zero = all_zero && v == 0.0;
      all_positive = all_positive && v > 0.0;
    }
    if (op.sigma <= 1.0) {
      ++below;
      o.require(all_zero, "sigma " + fmt("%.4f", op.sigma) + " <= 1 but rho* nonzero");
    } else {
      ++above;
      o.require(all_positive && fp.converged, "sigma " + fmt("%.4f", op.sigma) + " > 1 but rho* not strictly positive");
    }
  }
  o.require(below > 0 && above > 0, "suite does not cover both sides of the threshold");
  o.note(std::to_string(below) + " extinct, " + std::to_string(above) + " persistent");
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto up = classify(DiscreteModel(one_patch(0.5, 1.0, 100.0, desk(120.0))));
  const double gap = rel(up.evidence.final_rho[0], up.fixed_point.values[0]);
  o.require(gap <= 0.01, "sigma=2 gap " + fmt("%.3g", gap) + " > 1%");
  o.require(up.evidence.monotone_tail, "sigma=2 tail gap not monotone");

  const auto down = classify(DiscreteModel(one_patch(1.0, 0.5, 100.0, desk(120.0))));
  const double ratio = down.evidence.final_rho[0] / down.evidence.peak_rho;
  o.require(ratio <= 1e-3, "sigma=0.5 final/peak " + fmt("%.3g", ratio) + " > 1e-3");
  o.require(down.evidence.monotone_tail, "sigma=0.5 tail not monotone");
  o.note("gap " + fmt("%.2e", gap) + ", final/peak " + fmt("%.2e", ratio));
  return o;
}

Outcome criterion5() {
  Outcome o;
  double worst = 0.0;
  int positive_runs = 0;
  for (auto s : random_suite(20.0)) {
    const auto run = march(DiscreteModel(s));
    worst = std::min(worst, run.min_raw);
    o.require(run.min_raw >= -1e-12, "pre-clamp value " + fmt("%.3g", run.min_raw) + " < -1e-12");
    for (double v : run.newborns.values) o.require(v >= 0.0, "negative newborn value");

    // Strictly positive data everywhere.
    for (auto& p : s.patches) p.initial = RateProfile::constant(1.0);
    const auto pos = march(DiscreteModel(s));
    bool ok = true;
    for (std::size_t n = 1; n < pos.newborns.size(); ++n)
      for (double v : pos.newborns.at(n)) ok = ok && v > 0.0;
    if (ok) ++positive_runs;
    else o.require(false, "rho not strictly positive for t >= delta");
  }
  o.note("min pre-clamp " + fmt("%.2e", worst) + ", " + std::to_string(positive_runs) + " strictly positive runs");
  return o;
}

Outcome criterion6() {
  Outcome o;
  const DiscreteModel model(testing::source_sink(desk(1.0)));
  const auto r0 = build_R0(model);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  double worst_scaled = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Vector rho{u(rng), u(rng)};
    const auto lin = r0.matrix * rho;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
      const auto k = apply_Kbar(model, scaled(rho, eps));
      const double e = max_abs_diff(scaled(k, 1.0 / eps), lin) / max_norm(lin);
      const double bound = 1e-2 * (eps / 1e-2);
      worst_scaled = std::max(worst_scaled, e / bound);
      o.require(e <= bound, "eps " + fmt("%.0e", eps) + ": " + fmt("%.3g", e) + " > " + fmt("%.0e", bound));
    }
  }
  o.note("worst error / bound " + fmt("%.3g", worst_scaled));
  return o;
}

Outcome criterion7() {
  Outcome o;
  std::vector<double> sigmas;
  for (double d : {0.0, 0.1, 1.0}) {
    const DiscreteModel model(testing::symmetric_pair(0.5, 1.0, 100.0, d, desk(1.0)));
    const auto op = build_R0(model);
    sigmas.push_back(op.sigma);
    const auto fp = solve_rho_star(model, op);
    const double diff = std::abs(fp.values[0] - fp.values[1]);
    o.require(diff <= 1e-8, "d=" + fmt("%g", d) + ": rho* components differ by " + fmt("%.3g", diff));
  }
  const auto [lo, hi] = std::minmax_element(sigmas.begin(), sigmas.end());
  o.require(*hi - *lo <= 1e-6, "sigma varies by " + fmt("%.3g", *hi - *lo) + " across d");
  // m / mu up to the quadrature error already bounded in criterion 1.
  o.require(rel(sigmas[0], 2.0) <= 1e-4, "sigma " + fmt("%.8f", sigmas[0]) + " not m/mu");
  o.note("sigma spread " + fmt("%.2e", *hi - *lo) + ", sigma " + fmt("%.8f", sigmas[0]));
  return o;
}

Outcome criterion8() {
  Outcome o;
  double min_margin = std::numeric_limits<double>::infinity();
  for (const auto& s : random_suite(1.0)) {
    const DiscreteModel model(s);
    const double sigma = build_R0(model).sigma;
    const double bound = dispersal_lower_bound(model);
    min_margin = std::min(min_margin, sigma - bound);
    o.require(sigma >= bound * (1.0 - 1e-9), "sigma " + fmt("%.6f", sigma) + " < bound " + fmt("%.6f", bound));
  }
  const DiscreteModel rescue(testing::source_sink(desk(120.0)));
  const double bound = dispersal_lower_bound(rescue);
  o.require(std::abs(bound - 1.0 / 0.6) <= 1e-3, "source-sink bound " + fmt("%.6f", bound));
  const auto v = classify(rescue);
  o.require(v.classification == Classification::persistence, "source-sink not persistent");
  o.require(v.evidence.final_rho[1] > 0.0, "sink newborns vanish");
  o.note("min sigma - bound " + fmt("%.3g", min_margin) + ", rescue bound " + fmt("%.4f", bound) + ", sink rho " +
         fmt("%.4g", v.evidence.final_rho[1]));
  return o;
}

Outcome criterion9() {
  Outcome o;
  auto s = one_patch(0.5, 1.0, 100.0, desk(1.0, 1.0));
  const double sc = build_R0(DiscreteModel(s)).sigma;
  s.environment = Environment::periodic;
  const double sp = build_R0_periodic(DiscreteModel(s)).sigma;
  o.require(std::abs(sp - sc) <= 1e-8, "periodic " + fmt("%.12f", sp) + " vs constant " + fmt("%.12f", sc));

  s.patches[0].m.modulation = TimeModulation::sinusoidal(0.5, 1.0);
  const auto op = build_R0_periodic(DiscreteModel(s));
  const double dense = testing::dense_spectral_radius(op.matrix);
  o.require(std::abs(op.sigma - dense) <= 1e-8, "power " + fmt("%.12f", op.sigma) + " vs dense " + fmt("%.12f", dense));
  o.note("|dsigma| " + fmt("%.2e", std::abs(sp - sc)) + ", |power - dense| " + fmt("%.2e", std::abs(op.sigma - dense)));
  return o;
}

ScenarioSpec irregular_scenario(double mu, PeriodicModulation lo, PeriodicModulation hi, std::uint64_t seed,
                                double t_end) {
  auto s = one_patch(mu, 1.0, 100.0, desk(t_end, 1.0));
  s.environment = Environment::irregular;
  s.patches[0].m.modulation = TimeModulation::irregular(std::move(lo), std::move(hi), seed);
  materialize(s);
  return s;
}

Outcome criterion10() {
  Outcome o;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const auto s = irregular_scenario(0.5, SinusoidalModulation{0.3, 1.0, 0.0, 0.9},
                                      SinusoidalModulation{0.3, 1.0, 0.0, 1.1}, seed, 120.0);
    const auto rep = envelope_analysis(s, {0.05, 0.5});
    const std::string tag = "seed " + std::to_string(seed) + ": ";
    o.require(rep.outcome == EnvelopeOutcome::sandwich, tag + "envelopes do not both exceed 1");
    o.require(rep.sandwich.holds, tag + "sandwich violated (below " + fmt("%.3g", rep.sandwich.worst_below) +
                                      ", above " + fmt("%.3g", rep.sandwich.worst_above) + ")");
    if (seed == 1) o.note("sigma- " + fmt("%.4f", rep.sigma_minus) + ", sigma+ " + fmt("%.4f", rep.sigma_plus));
  }
  const auto dead = irregular_scenario(1.0, PeriodicTableModulation{1.0, {0.5}}, PeriodicTableModulation{1.0, {0.8}},
                                       11, 120.0);
  const auto rep = envelope_analysis(dead);
  const double ratio = max_norm(rep.final_rho) / rep.peak_rho;
  o.require(std::abs(rep.sigma_plus - 0.8) <= 1e-3, "sigma+ " + fmt("%.6f", rep.sigma_plus) + " not 0.8");
  o.require(rep.outcome == EnvelopeOutcome::extinction, "subcritical upper envelope not classified extinct");
  o.require(ratio <= 1e-3, "final/peak " + fmt("%.3g", ratio) + " > 1e-3");
  o.note("sigma+=0.8 final/peak " + fmt("%.2e", ratio));
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome criterion11() {
  namespace fs = std::filesystem;
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "agepatch_acceptance_determinism";
  fs::remove_all(root);
  const std::string scen = std::string(AGEPATCH_SCENARIO_DIR) + "/irregular.json";
  int compared = 0;
  for (const char* cmd : {"simulate", "envelope"}) {
    std::vector<std::string> reports;
    for (const char* run : {"a", "b"}) {
      const fs::path out = root / cmd / run;
      std::ostringstream so;
      std::ostringstream se;
      const auto r = cli::dispatch({cmd, scen, "--seed", "42", "--out", out.string(), "--snapshot-times", "60"}, so, se);
      o.require(r.exit_code == 0, std::string(cmd) + " exited " + std::to_string(r.exit_code) + ": " + se.str());
      reports.push_back(so.str());
    }
    const fs::path a = root / cmd / "a";
    const fs::path b = root / cmd / "b";
    if (!fs::exists(a)) continue;
    for (const auto& entry : fs::directory_iterator(a)) {
      ++compared;
      o.require(slurp(entry.path()) == slurp(b / entry.path().filename()),
                std::string(cmd) + "/" + entry.path().filename().string() + " differs");
    }
  }
  o.require(compared > 0, "no output files produced");
  o.note(std::to_string(compared) + " files byte-identical");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "linear one-patch net reproductive rate", criterion1},
      {2, "nonlinear one-patch equilibrium", criterion2},
      {3, "extinction/persistence dichotomy of rho*", criterion3},
      {4, "convergence of the marched trajectory", criterion4},
      {5, "positivity of cohorts and newborns", criterion5},
      {6, "small-data limit of the stationary map", criterion6},
      {7, "symmetric two-patch invariance", criterion7},
      {8, "soundness of the dispersal lower bound", criterion8},
      {9, "periodic operator consistency", criterion9},
      {10, "envelope sandwich", criterion10},
      {11, "determinism of CLI outputs", criterion11},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s criterion %2d: %s [%s] (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
