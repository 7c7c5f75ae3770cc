#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agepatch/analysis.hpp"
#include "agepatch/scenario_io.hpp"

namespace agepatch::cli {

using nlohmann::json;

enum class RunStatus { ok, validation_failed, numerical_failure };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::validation_failed: return "validation_failed";
    case RunStatus::numerical_failure: return "numerical_failure";
  }
  return "?";
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitUsage = 64;

struct RunReport {
  std::string command;
  std::string digest;  // FNV-1a 64 of the scenario file bytes
  std::vector<std::string> outputs;
  RunStatus status = RunStatus::ok;
};

struct DispatchResult {
  RunReport report;
  int exit_code = kExitOk;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"validate", "simulate", "spectral", "fixed-point",
                                                 "classify", "bounds",   "envelope"};
  return names;
}

inline std::string usage() {
  return "usage: agepatch <command> <scenario-file> [--out DIR] [--snapshot-times t1,t2,...]\n"
         "                [--epsilon E] [--seed S]\n"
         "commands: validate | simulate | spectral | fixed-point | classify | bounds | envelope\n";
}

// -- formatting ------------------------------------------------------------

/// 12 significant digits.
inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// JSON number rounded to 12 significant digits; non-finite values become
/// null.
inline json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(format_number(v));
}

inline json numbers(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string series_csv(const TimeSeries& s, const std::string& prefix) {
  std::string out = "t";
  for (std::size_t k = 0; k < s.patches; ++k) out += "," + prefix + std::to_string(k + 1);
  out += "\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += format_number(s.time(i));
    for (double v : s.at(i)) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

inline std::string snapshot_csv(const FieldSnapshot& snap, double delta) {
  std::string out = "age";
  for (std::size_t k = 0; k < snap.values.cols(); ++k) out += ",patch_" + std::to_string(k + 1);
  out += "\n";
  for (std::size_t i = 0; i < snap.values.rows(); ++i) {
    out += format_number(delta * static_cast<double>(i));
    for (std::size_t k = 0; k < snap.values.cols(); ++k) out += "," + format_number(snap.values(i, k));
    out += "\n";
  }
  return out;
}

inline json per_phase(const FixedPoint& fp, std::size_t n) {
  if (fp.kind == FixedPointKind::stationary) return numbers(fp.values);
  json phases = json::array();
  for (long p = 0; p < fp.phases; ++p)
    phases.push_back(numbers(std::span<const double>(fp.values).subspan(static_cast<std::size_t>(p) * n, n)));
  return phases;
}

// -- emission --------------------------------------------------------------

class EmitError : public Error {
 public:
  using Error::Error;
};

/// Writes each (name, content) pair into `dir` through a temporary file and
/// a rename. Returns the written paths in order.
inline std::vector<std::string> emit_outputs(const std::vector<std::pair<std::string, std::string>>& files,
                                             const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw EmitError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::string> written;
  for (const auto& [name, content] : files) {
    const fs::path target = dir / name;
    const fs::path tmp = dir / ("." + name + ".tmp");
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw EmitError("cannot write " + tmp.string());
      os.write(content.data(), static_cast<std::streamsize>(content.size()));
      os.flush();
      if (!os) {
        fs::remove(tmp, ec);
        throw EmitError("cannot write " + tmp.string());
      }
    }
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw EmitError("cannot move output into place: " + target.string());
    }
    written.push_back(target.string());
  }
  return written;
}

// -- commands --------------------------------------------------------------

struct Options {
  std::string command;
  std::string scenario_path;
  std::string out_dir = ".";
  std::vector<double> snapshot_times;
  double epsilon = 0.05;
  std::optional<std::uint64_t> seed;
};

using Files = std::vector<std::pair<std::string, std::string>>;

inline json diagnostics_json(const std::vector<Diagnostic>& diags) {
  json a = json::array();
  for (const auto& d : diags)
    a.push_back({{"severity", d.severity == Severity::error ? "error" : "warning"},
                 {"code", d.code},
                 {"message", d.message}});
  return a;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline Files run_simulate(const ScenarioSpec& spec, const Options& opt) {
  const DiscreteModel model(spec);
  MarchOptions mo;
  for (double t : opt.snapshot_times) {
    const long n = grid_index(t, spec.grid.delta, "snapshot time");
    if (n < 0 || n > model.time_steps()) throw ConfigurationError("snapshot time outside [0, t_end]");
    mo.snapshot_indices.push_back(n);
  }
  const auto res = march(model, mo);
  Files files = {{"newborns.csv", series_csv(res.newborns, "rho_")},
                 {"population.csv", series_csv(res.totals, "N_")}};
  for (const auto& snap : res.snapshots)
    files.emplace_back("field_t" + format_number(snap.time) + ".csv", snapshot_csv(snap, spec.grid.delta));
  return files;
}

inline ReproductiveOperator operator_for(const DiscreteModel& model) {
  if (model.environment() == Environment::constant) return build_R0(model);
  if (model.environment() == Environment::periodic) return build_R0_periodic(model);
  throw ConfigurationError("irregular environments have no single net reproductive operator; use 'envelope'");
}

inline json operator_json(const ReproductiveOperator& op) {
  json j;
  j["kind"] = op.kind == OperatorKind::constant ? "constant" : "periodic";
  j["sigma"] = number(op.sigma);
  j["classification"] = to_string(classify_sigma(op.sigma));
  j["phases"] = op.phases;
  j["iterations"] = op.iterations;
  const std::size_t n = op.patches();
  if (op.kind == OperatorKind::constant) {
    j["perron"] = numbers(op.perron);
    json rows = json::array();
    for (std::size_t r = 0; r < op.matrix.rows(); ++r) rows.push_back(numbers(op.matrix.row(r)));
    j["matrix"] = rows;
  } else {
    json phases = json::array();
    for (long p = 0; p < op.phases; ++p)
      phases.push_back(numbers(std::span<const double>(op.perron).subspan(static_cast<std::size_t>(p) * n, n)));
    j["perron"] = phases;
  }
  return j;
}

inline Files run_spectral(const ScenarioSpec& spec) {
  const DiscreteModel model(spec);
  json rep = operator_json(operator_for(model));
  rep["command"] = "spectral";
  return {{"report.json", dump(rep)}};
}

inline Files run_fixed_point(const ScenarioSpec& spec) {
  const DiscreteModel model(spec);
  const auto op = operator_for(model);
  const auto fp = op.kind == OperatorKind::constant ? solve_rho_star(model, op) : solve_rho_star_periodic(model, op);
  json rep;
  rep["command"] = "fixed-point";
  rep["kind"] = fp.kind == FixedPointKind::stationary ? "stationary" : "periodic";
  rep["sigma"] = number(op.sigma);
  rep["classification"] = to_string(classify_sigma(op.sigma));
  rep["rho_star"] = per_phase(fp, spec.n_patches());
  rep["converged"] = fp.converged;
  rep["iterations"] = fp.iterations;
  return {{"report.json", dump(rep)}};
}

inline json bounds_json(const DiscreteModel& model) {
  return {{"isolated", numbers(isolated_rates(model))}, {"dispersal_lower_bound", number(dispersal_lower_bound(model))}};
}

inline Files run_classify(const ScenarioSpec& spec) {
  const DiscreteModel model(spec);
  const auto v = classify(model);
  json rep;
  rep["command"] = "classify";
  rep["sigma"] = number(v.sigma);
  rep["classification"] = to_string(v.classification);
  rep["rho_star"] = per_phase(v.fixed_point, spec.n_patches());
  rep["fixed_point"] = {{"converged", v.fixed_point.converged}, {"iterations", v.fixed_point.iterations}};
  rep["evidence"] = {{"final_rho", numbers(v.evidence.final_rho)},
                     {"peak_rho", number(v.evidence.peak_rho)},
                     {"relative_gap", number(v.evidence.relative_gap)},
                     {"monotone_tail", v.evidence.monotone_tail},
                     {"tail_window", {number(v.evidence.tail_start), number(spec.grid.t_end)}}};
  if (spec.environment == Environment::constant) rep["bounds"] = bounds_json(model);
  return {{"report.json", dump(rep)},
          {"newborns.csv", series_csv(v.trajectory.newborns, "rho_")},
          {"population.csv", series_csv(v.trajectory.totals, "N_")}};
}

inline Files run_bounds(const ScenarioSpec& spec) {
  const DiscreteModel model(spec);
  json rep;
  rep["command"] = "bounds";
  rep["bounds"] = bounds_json(model);
  const auto op = build_R0(model);
  rep["sigma"] = number(op.sigma);
  rep["classification"] = to_string(classify_sigma(op.sigma));
  return {{"report.json", dump(rep)}};
}

inline Files run_envelope(const ScenarioSpec& spec, const Options& opt) {
  EnvelopeOptions eo;
  eo.epsilon = opt.epsilon;
  const auto r = envelope_analysis(spec, eo);
  json rep;
  rep["command"] = "envelope";
  rep["sigma"] = {{"minus", number(r.sigma_minus)}, {"plus", number(r.sigma_plus)}};
  rep["classification"] = to_string(r.outcome);
  const std::size_t n = spec.n_patches();
  if (r.sandwich.checked)
    rep["rho_star"] = {{"minus", per_phase(r.rho_minus, n)}, {"plus", per_phase(r.rho_plus, n)}};
  else
    rep["rho_star"] = nullptr;
  rep["sandwich"] = {{"checked", r.sandwich.checked},
                     {"holds", r.sandwich.holds},
                     {"window", {number(r.sandwich.window_lo), number(r.sandwich.window_hi)}},
                     {"epsilon", number(opt.epsilon)},
                     {"epsilon_abs", number(r.sandwich.epsilon_abs)}};
  rep["evidence"] = {{"final_rho", numbers(r.final_rho)}, {"peak_rho", number(r.peak_rho)}};
  return {{"report.json", dump(rep)}, {"newborns.csv", series_csv(r.trajectory.newborns, "rho_")}};
}

inline json report_json(const RunReport& r) {
  return {{"command", r.command}, {"inputs", {{"digest", r.digest}}}, {"outputs", r.outputs}, {"status", to_string(r.status)}};
}

/// Parses argv (without the program name), runs the command and emits its
/// files. Diagnostics and errors go to `err`, the run report to `out`.
inline DispatchResult dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                               std::ostream& err = std::cerr) {
  DispatchResult res;
  if (args.empty() || std::find(commands().begin(), commands().end(), args[0]) == commands().end()) {
    if (!args.empty()) err << "unknown command '" << args[0] << "'\n";
    err << usage();
    res.exit_code = kExitUsage;
    res.report.status = RunStatus::validation_failed;
    return res;
  }

  Options opt;
  CLI::App app{"agepatch"};
  app.add_option("command", opt.command)->required();
  app.add_option("scenario", opt.scenario_path)->required();
  app.add_option("--out", opt.out_dir);
  std::string snapshots;
  app.add_option("--snapshot-times", snapshots);
  app.add_option("--epsilon", opt.epsilon);
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed);
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << usage();
    res.exit_code = kExitUsage;
    res.report.status = RunStatus::validation_failed;
    return res;
  }
  if (seed_opt->count() > 0) opt.seed = seed;
  if (!snapshots.empty()) {
    std::stringstream ss(snapshots);
    std::string tok;
    try {
      while (std::getline(ss, tok, ',')) opt.snapshot_times.push_back(std::stod(tok));
    } catch (const std::exception&) {
      err << "--snapshot-times: expected a comma-separated list of numbers\n" << usage();
      res.exit_code = kExitUsage;
      return res;
    }
  }

  auto& rep = res.report;
  rep.command = opt.command;
  auto fail = [&](RunStatus s, int code, const std::string& msg) {
    err << msg << "\n";
    rep.status = s;
    rep.outputs.clear();
    res.exit_code = code;
    out << report_json(rep).dump(2) << "\n";
    return res;
  };

  std::string text;
  {
    std::ifstream is(opt.scenario_path, std::ios::binary);
    if (!is) return fail(RunStatus::validation_failed, kExitValidation, "cannot read " + opt.scenario_path);
    std::ostringstream buf;
    buf << is.rdbuf();
    text = buf.str();
  }
  rep.digest = fnv1a_hex(text);

  ScenarioSpec spec;
  try {
    spec = load_scenario(text, LoadOptions{opt.seed});
  } catch (const Error& e) {
    return fail(RunStatus::validation_failed, kExitValidation, e.what());
  }
  const auto diags = validate_scenario(spec);
  for (const auto& d : diags)
    err << (d.severity == Severity::error ? "error" : "warning") << " [" << d.code << "] " << d.message << "\n";
  if (has_errors(diags)) return fail(RunStatus::validation_failed, kExitValidation, "scenario failed validation");

  Files files;
  try {
    if (opt.command == "validate")
      files = {{"diagnostics.json", dump({{"valid", true}, {"diagnostics", diagnostics_json(diags)}})}};
    else if (opt.command == "simulate")
      files = run_simulate(spec, opt);
    else if (opt.command == "spectral")
      files = run_spectral(spec);
    else if (opt.command == "fixed-point")
      files = run_fixed_point(spec);
    else if (opt.command == "classify")
      files = run_classify(spec);
    else if (opt.command == "bounds")
      files = run_bounds(spec);
    else
      files = run_envelope(spec, opt);
  } catch (const ConfigurationError& e) {
    return fail(RunStatus::validation_failed, kExitValidation, e.what());
  } catch (const Error& e) {
    return fail(RunStatus::numerical_failure, kExitNumerical, e.what());
  }

  try {
    rep.outputs = emit_outputs(files, opt.out_dir);
  } catch (const EmitError& e) {
    return fail(RunStatus::numerical_failure, kExitNumerical, e.what());
  }
  rep.status = RunStatus::ok;
  out << report_json(rep).dump(2) << "\n";
  return res;
}

}  // namespace agepatch::cli
