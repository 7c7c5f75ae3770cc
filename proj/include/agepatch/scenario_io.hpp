#pragma once

// JSON scenario documents.
//
//   {
//     "environment": "constant" | "periodic" | "irregular",
//     "grid": {"delta": 0.02, "a_max": 40, "t_end": 120, "period": 1},
//     "patches": [{"mu": RATE, "m": RATE, "L": RATE, "initial": PROFILE}, ...],
//     "dispersion": {"diagonal_mode": "mass_conserving" | "explicit",
//                    "offdiag": {"1->2": RATE, ...},      // from 1 into 2
//                    "diagonal": [RATE, ...]}             // explicit: |D_kk|
//   }
//
// RATE is a number (constant, unmodulated) or {"profile": PROFILE,
// "modulation": MODULATION}. PROFILE is a number or one of
//   {"kind": "constant", "value": v}
//   {"kind": "table", "ages": [...], "values": [...]}
//   {"kind": "window", "value": v, "a_lo": lo, "a_hi": hi}
// MODULATION is one of
//   {"kind": "none"}
//   {"kind": "sinusoidal", "beta": b, "period": T, "phase": p, "scale": s}
//   {"kind": "periodic_table", "period": T, "values": [...]}
//   {"kind": "irregular", "lo": MODULATION, "hi": MODULATION, "seed": n}

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "agepatch/scenario.hpp"

namespace agepatch {

struct LoadOptions {
  /// Replaces the seed of every irregular modulation.
  std::optional<std::uint64_t> seed_override;
};

namespace io_detail {

using json = nlohmann::json;

inline void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path + ": expected an object");
}

inline void expect_keys(const json& j, const std::string& path,
                        std::initializer_list<const char*> required,
                        std::initializer_list<const char*> optional = {}) {
  expect_object(j, path);
  std::set<std::string> allowed;
  for (const char* k : required) {
    allowed.insert(k);
    if (!j.contains(k)) throw SchemaError(path + ": missing field '" + k + "'");
  }
  for (const char* k : optional) allowed.insert(k);
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw SchemaError(path + ": unexpected field '" + key + "'");
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path + ": expected a number");
  return j.get<double>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path + ": expected a string");
  return j.get<std::string>();
}

inline RateProfile parse_profile(const json& j, const std::string& path, double a_max) {
  if (j.is_number()) return RateProfile::constant(j.get<double>());
  expect_object(j, path);
  if (!j.contains("kind")) throw SchemaError(path + ": missing field 'kind'");
  const auto kind = text(j["kind"], path + ".kind");
  if (kind == "constant") {
    expect_keys(j, path, {"kind", "value"});
    return RateProfile::constant(number(j["value"], path + ".value"));
  }
  if (kind == "window") {
    expect_keys(j, path, {"kind", "value", "a_lo", "a_hi"});
    return RateProfile::window(number(j["value"], path + ".value"), number(j["a_lo"], path + ".a_lo"),
                               number(j["a_hi"], path + ".a_hi"));
  }
  if (kind == "table") {
    expect_keys(j, path, {"kind", "ages", "values"});
    auto ages = numbers(j["ages"], path + ".ages");
    auto values = numbers(j["values"], path + ".values");
    if (ages.size() != values.size() || ages.empty())
      throw SchemaError(path + ": ages and values must be nonempty and of equal length");
    for (std::size_t i = 1; i < ages.size(); ++i)
      if (!(ages[i] > ages[i - 1])) throw SchemaError(path + ": table breakpoints must be strictly increasing");
    if (ages.front() > 0.0 || ages.back() < a_max)
      throw SchemaError(path + ": table breakpoints must cover [0, a_max]");
    return RateProfile::table(std::move(ages), std::move(values));
  }
  throw SchemaError(path + ": unknown profile kind '" + kind + "'");
}

inline PeriodicModulation parse_periodic(const json& j, const std::string& path) {
  expect_object(j, path);
  if (!j.contains("kind")) throw SchemaError(path + ": missing field 'kind'");
  const auto kind = text(j["kind"], path + ".kind");
  if (kind == "none") {
    expect_keys(j, path, {"kind"});
    return NoModulation{};
  }
  if (kind == "sinusoidal") {
    expect_keys(j, path, {"kind", "beta", "period"}, {"phase", "scale"});
    SinusoidalModulation s;
    s.beta = number(j["beta"], path + ".beta");
    s.period = number(j["period"], path + ".period");
    if (j.contains("phase")) s.phase = number(j["phase"], path + ".phase");
    if (j.contains("scale")) s.scale = number(j["scale"], path + ".scale");
    return s;
  }
  if (kind == "periodic_table") {
    expect_keys(j, path, {"kind", "period", "values"});
    PeriodicTableModulation p;
    p.period = number(j["period"], path + ".period");
    p.values = numbers(j["values"], path + ".values");
    if (p.values.empty()) throw SchemaError(path + ".values: must not be empty");
    return p;
  }
  if (kind == "irregular") throw SchemaError(path + ": envelopes must be periodic modulations");
  throw SchemaError(path + ": unknown modulation kind '" + kind + "'");
}

inline TimeModulation parse_modulation(const json& j, const std::string& path,
                                       const LoadOptions& opts) {
  expect_object(j, path);
  if (j.contains("kind") && j["kind"] == "irregular") {
    expect_keys(j, path, {"kind", "lo", "hi", "seed"});
    if (!j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0)
      throw SchemaError(path + ".seed: expected a nonnegative integer");
    const auto seed = opts.seed_override.value_or(j["seed"].get<std::uint64_t>());
    return TimeModulation::irregular(parse_periodic(j["lo"], path + ".lo"),
                                     parse_periodic(j["hi"], path + ".hi"), seed);
  }
  return std::visit([](auto m) { return TimeModulation{m}; }, parse_periodic(j, path));
}

inline Rate parse_rate(const json& j, const std::string& path, double a_max,
                       const LoadOptions& opts) {
  if (j.is_number()) return Rate::constant(j.get<double>());
  expect_keys(j, path, {"profile"}, {"modulation"});
  Rate r;
  r.profile = parse_profile(j["profile"], path + ".profile", a_max);
  if (j.contains("modulation")) r.modulation = parse_modulation(j["modulation"], path + ".modulation", opts);
  return r;
}

/// "j->k" with 1-based patch numbers.
inline std::pair<std::size_t, std::size_t> parse_edge(const std::string& key, std::size_t n,
                                                      const std::string& path) {
  const auto arrow = key.find("->");
  std::size_t from = 0;
  std::size_t to = 0;
  try {
    if (arrow == std::string::npos) throw std::invalid_argument(key);
    std::size_t used = 0;
    from = std::stoul(key.substr(0, arrow), &used);
    if (used != arrow) throw std::invalid_argument(key);
    const auto rest = key.substr(arrow + 2);
    to = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(key);
  } catch (const std::exception&) {
    throw SchemaError(path + ": key '" + key + "' is not of the form 'j->k'");
  }
  if (from < 1 || to < 1 || from > n || to > n || from == to)
    throw SchemaError(path + ": key '" + key + "' does not name two distinct patches");
  return {from - 1, to - 1};
}

// -- serialization ---------------------------------------------------------

inline json to_json(const RateProfile& p) {
  if (const auto* c = std::get_if<ConstantProfile>(&p.kind)) return {{"kind", "constant"}, {"value", c->value}};
  if (const auto* w = std::get_if<WindowProfile>(&p.kind))
    return {{"kind", "window"}, {"value", w->value}, {"a_lo", w->a_lo}, {"a_hi", w->a_hi}};
  const auto& t = std::get<TableProfile>(p.kind);
  return {{"kind", "table"}, {"ages", t.ages}, {"values", t.values}};
}

inline json to_json(const PeriodicModulation& m) {
  if (const auto* s = std::get_if<SinusoidalModulation>(&m))
    return {{"kind", "sinusoidal"}, {"beta", s->beta}, {"period", s->period}, {"phase", s->phase}, {"scale", s->scale}};
  if (const auto* t = std::get_if<PeriodicTableModulation>(&m))
    return {{"kind", "periodic_table"}, {"period", t->period}, {"values", t->values}};
  return {{"kind", "none"}};
}

inline json to_json(const TimeModulation& m) {
  if (const auto* irr = std::get_if<IrregularModulation>(&m.kind))
    return {{"kind", "irregular"}, {"lo", to_json(irr->lo)}, {"hi", to_json(irr->hi)}, {"seed", irr->seed}};
  return to_json(*m.as_periodic());
}

inline json to_json(const Rate& r) {
  return {{"profile", to_json(r.profile)}, {"modulation", to_json(r.modulation)}};
}

}  // namespace io_detail

/// Parses and materializes a scenario document. Sign and unit problems are
/// left to validate_scenario(); structural problems throw.
inline ScenarioSpec load_scenario(std::string_view document, const LoadOptions& opts = {}) {
  using io_detail::json;
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed scenario document: ") + e.what());
  }

  io_detail::expect_keys(doc, "scenario", {"environment", "grid", "patches"}, {"dispersion"});
  ScenarioSpec spec;

  const auto env = io_detail::text(doc["environment"], "environment");
  if (env == "constant") spec.environment = Environment::constant;
  else if (env == "periodic") spec.environment = Environment::periodic;
  else if (env == "irregular") spec.environment = Environment::irregular;
  else throw SchemaError("environment: unknown kind '" + env + "'");

  const auto& g = doc["grid"];
  io_detail::expect_keys(g, "grid", {"delta", "a_max", "t_end"}, {"period"});
  spec.grid.delta = io_detail::number(g["delta"], "grid.delta");
  spec.grid.a_max = io_detail::number(g["a_max"], "grid.a_max");
  spec.grid.t_end = io_detail::number(g["t_end"], "grid.t_end");
  if (g.contains("period")) spec.grid.period = io_detail::number(g["period"], "grid.period");
  if (spec.grid.age_steps() <= 0 || spec.grid.time_steps() <= 0)
    throw SchemaError("grid: a_max and t_end must be positive integer multiples of delta");

  const double a_max = spec.grid.a_max;
  const auto& patches = doc["patches"];
  if (!patches.is_array() || patches.empty()) throw SchemaError("patches: expected a nonempty array");
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const std::string path = "patches[" + std::to_string(k) + "]";
    io_detail::expect_keys(patches[k], path, {"mu", "m", "L", "initial"});
    PatchRates p;
    p.mu = io_detail::parse_rate(patches[k]["mu"], path + ".mu", a_max, opts);
    p.m = io_detail::parse_rate(patches[k]["m"], path + ".m", a_max, opts);
    p.L = io_detail::parse_rate(patches[k]["L"], path + ".L", a_max, opts);
    p.initial = io_detail::parse_profile(patches[k]["initial"], path + ".initial", a_max);
    spec.patches.push_back(std::move(p));
  }

  const std::size_t n = spec.patches.size();
  spec.dispersion = DispersionSpec::none(n);
  if (doc.contains("dispersion")) {
    const auto& d = doc["dispersion"];
    io_detail::expect_keys(d, "dispersion", {"diagonal_mode"}, {"offdiag", "diagonal"});
    const auto mode = io_detail::text(d["diagonal_mode"], "dispersion.diagonal_mode");
    if (mode == "mass_conserving") spec.dispersion.mode = DiagonalMode::mass_conserving;
    else if (mode == "explicit") spec.dispersion.mode = DiagonalMode::explicit_outflow;
    else throw SchemaError("dispersion.diagonal_mode: unknown mode '" + mode + "'");
    if (d.contains("offdiag")) {
      io_detail::expect_object(d["offdiag"], "dispersion.offdiag");
      for (const auto& [key, val] : d["offdiag"].items()) {
        const auto [from, to] = io_detail::parse_edge(key, n, "dispersion.offdiag");
        spec.dispersion.set(to, from, io_detail::parse_rate(val, "dispersion.offdiag." + key, a_max, opts));
      }
    }
    if (spec.dispersion.mode == DiagonalMode::explicit_outflow) {
      if (!d.contains("diagonal") || !d["diagonal"].is_array() || d["diagonal"].size() != n)
        throw SchemaError("dispersion.diagonal: explicit mode needs one outflow rate per patch");
      for (std::size_t k = 0; k < n; ++k)
        spec.dispersion.outflow.push_back(
            io_detail::parse_rate(d["diagonal"][k], "dispersion.diagonal[" + std::to_string(k) + "]", a_max, opts));
    } else if (d.contains("diagonal")) {
      throw SchemaError("dispersion.diagonal: only allowed in explicit mode");
    }
  }

  materialize(spec);
  return spec;
}

/// Canonical document for `spec`; load_scenario(save_scenario(s)) == s.
inline nlohmann::json scenario_to_json(const ScenarioSpec& spec) {
  using io_detail::json;
  using io_detail::to_json;
  json doc;
  doc["environment"] = to_string(spec.environment);
  json grid = {{"delta", spec.grid.delta}, {"a_max", spec.grid.a_max}, {"t_end", spec.grid.t_end}};
  if (spec.grid.period) grid["period"] = *spec.grid.period;
  doc["grid"] = grid;
  json patches = json::array();
  for (const auto& p : spec.patches)
    patches.push_back({{"mu", to_json(p.mu)}, {"m", to_json(p.m)}, {"L", to_json(p.L)}, {"initial", to_json(p.initial)}});
  doc["patches"] = patches;
  const std::size_t n = spec.n_patches();
  json disp;
  disp["diagonal_mode"] = spec.dispersion.mode == DiagonalMode::explicit_outflow ? "explicit" : "mass_conserving";
  json off = json::object();
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      if (const auto& r = spec.dispersion.offdiag[k * n + j])
        off[std::to_string(j + 1) + "->" + std::to_string(k + 1)] = to_json(*r);
  disp["offdiag"] = off;
  if (spec.dispersion.mode == DiagonalMode::explicit_outflow) {
    json diag = json::array();
    for (const auto& r : spec.dispersion.outflow) diag.push_back(to_json(r));
    disp["diagonal"] = diag;
  }
  doc["dispersion"] = disp;
  return doc;
}

inline std::string save_scenario(const ScenarioSpec& spec) { return scenario_to_json(spec).dump(2); }

}  // namespace agepatch
