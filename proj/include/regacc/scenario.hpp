#pragma once

/// @file
/// Scenario configuration and its JSON file format. Every object rejects
/// keys it does not know; omitted keys take the defaults below.

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "regacc/controller.hpp"
#include "regacc/errors.hpp"
#include "regacc/traffic_env.hpp"
#include "regacc/vehicle.hpp"

namespace regacc {

/// Uniform signal: green phases start at offset + k * (green + yellow + red).
struct SignalSpec {
  double position = 0.0;
  double offset = 0.0;
  double green = 25.0;
  double yellow = 5.0;
  double red = 20.0;
};

struct TrafficConfig {
  double tau = 6.0;
  double lambda_min = 0.1;
  double default_spacing = 1000.0;
  /// Class-K slope of the degree-1 traffic barrier.
  double alpha = 1.0;
};

struct ScenarioConfig {
  VehicleParams vehicle;
  PIDGains pid;
  TrafficConfig traffic;
  double dt = 0.01;
  double horizon = 300.0;
  bool hold_guard = false;
  InputMode mode = InputMode::Constrained;
  std::vector<SignalSpec> signals;
  LeadProfile lead;
  VehicleState initial{0.0, 0.0, 4.5, 0.0, 0.0};

  void validate() const {
    vehicle.validate();
    lead.validate();
    if (!(dt > 0.0)) throw ConfigError("sim.dt must be positive");
    if (!(horizon >= 0.0)) throw ConfigError("sim.horizon must be >= 0");
    if (!(traffic.tau > 0.0)) throw ConfigError("traffic.tau must be positive");
    if (!(traffic.lambda_min > 0.0)) throw ConfigError("traffic.lambda_min must be positive");
    if (!(traffic.default_spacing > 0.0)) throw ConfigError("traffic.default_spacing must be positive");
    if (!(traffic.alpha > 0.0)) throw ConfigError("traffic.alpha must be positive");
    for (std::size_t i = 1; i < signals.size(); ++i) {
      if (!(signals[i - 1].position < signals[i].position)) {
        throw ConfigError("signal positions must be strictly increasing");
      }
    }
    if (initial.V_f < 0.0 || initial.V_l < 0.0) throw ConfigError("initial velocities must be >= 0");
    if (initial.X_l < initial.X_f) throw ConfigError("lead must start ahead of the ego vehicle");
  }

  std::vector<SignalTiming> signal_timings() const {
    std::vector<SignalTiming> out;
    out.reserve(signals.size());
    for (const auto& s : signals) {
      out.push_back(SignalTiming::periodic(s.position, s.offset, s.green, s.yellow, s.red, 0.0, horizon));
    }
    return out;
  }

  TrafficCBFParams traffic_params(int degree) const {
    TrafficCBFParams p;
    p.tau = traffic.tau;
    p.S0 = vehicle.S0;
    p.gamma = vehicle.V_max / vehicle.a_min;
    p.terminal_spacing = traffic.default_spacing;
    p.alpha = degree == 1 ? traffic.alpha : 1.0;
    return p;
  }

  int traffic_degree() const { return mode == InputMode::Constrained ? 1 : 2; }

  ControllerConfig controller_config() const {
    return {vehicle, pid, mode, traffic.lambda_min, hold_guard ? dt : 0.0};
  }
};

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void number(const char* key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) throw ConfigError(path_ + "." + key + ": expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(path_ + "." + key + ": not finite");
    }
  }

  void required_number(const char* key, double& out) {
    if (!j_.contains(key)) throw ConfigError(path_ + "." + key + ": missing");
    number(key, out);
  }

  const nlohmann::json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& root) {
  ScenarioConfig cfg;
  detail::ObjectReader top(root, "scenario");

  if (const auto* v = top.find("vehicle")) {
    detail::ObjectReader r(*v, "vehicle");
    auto& p = cfg.vehicle;
    r.number("mass", p.mass);
    r.number("c0", p.c0);
    r.number("c1", p.c1);
    r.number("c2", p.c2);
    r.number("headway", p.headway);
    r.number("S0", p.S0);
    r.number("a_max", p.a_max);
    r.number("a_min", p.a_min);
    r.number("V_max", p.V_max);
    r.finish();
  }
  if (const auto* v = top.find("pid")) {
    detail::ObjectReader r(*v, "pid");
    r.number("k1", cfg.pid.k1);
    r.number("k2", cfg.pid.k2);
    r.number("k3", cfg.pid.k3);
    r.finish();
  }
  if (const auto* v = top.find("traffic")) {
    detail::ObjectReader r(*v, "traffic");
    r.number("tau", cfg.traffic.tau);
    r.number("lambda_min", cfg.traffic.lambda_min);
    r.number("default_spacing", cfg.traffic.default_spacing);
    r.number("alpha", cfg.traffic.alpha);
    r.finish();
  }
  if (const auto* v = top.find("sim")) {
    detail::ObjectReader r(*v, "sim");
    r.number("dt", cfg.dt);
    r.number("horizon", cfg.horizon);
    if (const auto* g = r.find("hold_guard")) {
      if (!g->is_boolean()) throw ConfigError("sim.hold_guard: expected true or false");
      cfg.hold_guard = g->get<bool>();
    }
    if (const auto* m = r.find("mode")) {
      const auto mode = m->is_string() ? m->get<std::string>() : std::string{};
      if (mode == "constrained") {
        cfg.mode = InputMode::Constrained;
      } else if (mode == "unconstrained") {
        cfg.mode = InputMode::Unconstrained;
      } else {
        throw ConfigError("sim.mode: expected \"constrained\" or \"unconstrained\"");
      }
    }
    r.finish();
  }
  if (const auto* v = top.find("signals")) {
    if (!v->is_array()) throw ConfigError("signals: expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      detail::ObjectReader r((*v)[i], "signals[" + std::to_string(i) + "]");
      SignalSpec s;
      r.required_number("position", s.position);
      r.number("offset", s.offset);
      r.number("green", s.green);
      r.number("yellow", s.yellow);
      r.number("red", s.red);
      r.finish();
      cfg.signals.push_back(s);
    }
  }
  if (const auto* v = top.find("lead")) {
    detail::ObjectReader r(*v, "lead");
    r.number("initial_velocity", cfg.lead.initial_velocity);
    if (const auto* prof = r.find("profile")) {
      if (!prof->is_array()) throw ConfigError("lead.profile: expected an array");
      for (std::size_t i = 0; i < prof->size(); ++i) {
        detail::ObjectReader b((*prof)[i], "lead.profile[" + std::to_string(i) + "]");
        LeadProfile::Breakpoint bp{};
        b.required_number("t", bp.t);
        b.required_number("accel", bp.accel);
        b.finish();
        cfg.lead.breakpoints.push_back(bp);
      }
    }
    r.finish();
  }
  if (const auto* v = top.find("initial")) {
    detail::ObjectReader r(*v, "initial");
    r.number("X_f", cfg.initial.X_f);
    r.number("V_f", cfg.initial.V_f);
    r.number("X_l", cfg.initial.X_l);
    r.number("e", cfg.initial.e);
    r.finish();
  }
  top.finish();
  cfg.initial.V_l = cfg.lead.initial_velocity;

  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

/// Reads a scenario file. A bare name without an existing file is looked up
/// as <name>.json in the bundled scenario directory.
inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::filesystem::path resolved = path;
#ifdef REGACC_SCENARIO_DIR
  if (!std::filesystem::exists(resolved) && !path.has_extension()) {
    resolved = std::filesystem::path(REGACC_SCENARIO_DIR) / (path.string() + ".json");
  }
#endif
  std::ifstream in(resolved);
  if (!in) throw ConfigError("cannot open scenario file " + resolved.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(resolved.string() + ": " + e.what());
  }
  return parse_scenario(j);
}

}  // namespace regacc
