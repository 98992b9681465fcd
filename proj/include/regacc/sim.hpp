#pragma once

/// @file
/// Closed-loop simulation, hard-constraint audit and barrier validation for
/// a scenario.

#include <cmath>
#include <limits>
#include <memory>
#include <string_view>
#include <vector>

#include "regacc/controller.hpp"
#include "regacc/scenario.hpp"
#include "regacc/trace.hpp"
#include "regacc/traffic_env.hpp"
#include "regacc/vehicle.hpp"

namespace regacc {

enum class StopReason { Horizon, PastLastSignal };

constexpr std::string_view to_string(StopReason r) {
  return r == StopReason::Horizon ? "horizon" : "past-last-signal";
}

struct SimulationResult {
  Trace trace;
  StopReason stop = StopReason::Horizon;
  std::size_t infeasible_steps = 0;
};

inline std::shared_ptr<const TrafficCBF> build_scenario_cbf(const ScenarioConfig& cfg, int degree) {
  if (cfg.signals.empty()) return nullptr;
  const auto timings = cfg.signal_timings();
  return std::make_shared<const TrafficCBF>(
      build_traffic_cbf(timings, cfg.traffic_params(degree), {0.0, cfg.horizon}, degree));
}

/// One control step per integration step: read the broadcast, filter the
/// nominal input, log, then advance ego and lead by RK4.
inline SimulationResult run(const ScenarioConfig& cfg) {
  cfg.validate();
  SimulationResult result;
  const auto steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
  if (steps == 0) return result;

  const auto timings = cfg.signal_timings();
  const auto traffic = build_scenario_cbf(cfg, cfg.traffic_degree());
  SafetyController controller(cfg.controller_config(), traffic);

  VehicleState state = cfg.initial;
  result.trace.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    if (traffic && state.X_f > traffic->stop_lines().back()) {
      result.stop = StopReason::PastLastSignal;
      break;
    }
    const double lead_accel = lead_velocity(cfg.lead, t).accel;
    const auto out = controller.filter(state, t, lead_accel);

    TraceRecord rec;
    rec.t = t;
    rec.X_f = state.X_f;
    rec.V_f = state.V_f;
    rec.X_l = state.X_l;
    rec.V_l = state.V_l;
    rec.u = out.u;
    rec.mu = out.mu;
    rec.u_nom = out.u_nom;
    rec.h1 = out.h1;
    rec.h2 = out.h2;
    rec.h3 = out.h3;
    if (out.region) {
      rec.signal = static_cast<int>(*out.region) + 1;
      rec.signal_state = broadcast(timings, t, cfg.dt)[*out.region].state;
    }
    rec.active = out.active;
    rec.qp_infeasible = out.qp_infeasible;
    if (out.qp_infeasible) ++result.infeasible_steps;
    result.trace.push_back(std::move(rec));

    try {
      state = step(cfg.vehicle, state, out.u, lead_accel, cfg.dt, !out.overridden);
    } catch (const NumericError&) {
      throw NumericError("simulation diverged", k);
    }
  }
  return result;
}

struct RedLightViolation {
  std::size_t step;
  int signal;  // 1-based
  double t;
  double X_before;
  double X_after;
};

struct HardConstraintReport {
  double min_h1 = std::numeric_limits<double>::infinity();
  double min_spacing_error = std::numeric_limits<double>::infinity();
  double max_speed_excess = -std::numeric_limits<double>::infinity();
  double min_speed = std::numeric_limits<double>::infinity();
  double min_h3 = std::numeric_limits<double>::infinity();
  std::vector<RedLightViolation> red_violations;
  std::size_t qp_infeasible_steps = 0;

  bool satisfied(double eps = 1e-3) const {
    return min_h1 >= -eps && max_speed_excess <= eps && min_speed >= 0.0 && min_h3 >= -eps &&
           red_violations.empty();
  }
};

/// Margins of HC-I/II/III over a trace. The red-light audit is independent
/// of any barrier: it flags every step in which the ego passes a stop line
/// while that signal is red.
inline HardConstraintReport verify_hard_constraints(const Trace& trace, const ScenarioConfig& cfg) {
  if (trace.empty()) throw ArgumentError("verify_hard_constraints needs a non-empty trace");
  HardConstraintReport rep;
  const auto& p = cfg.vehicle;
  for (const auto& r : trace) {
    rep.min_h1 = std::min(rep.min_h1, r.h1);
    rep.min_spacing_error = std::min(rep.min_spacing_error, r.X_l - r.X_f - p.headway * r.V_f - p.S0);
    rep.max_speed_excess = std::max(rep.max_speed_excess, r.V_f - p.V_max);
    rep.min_speed = std::min(rep.min_speed, r.V_f);
    if (r.h3) rep.min_h3 = std::min(rep.min_h3, *r.h3);
    if (r.qp_infeasible) ++rep.qp_infeasible_steps;
  }
  const auto timings = cfg.signal_timings();
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const auto& prev = trace[k - 1];
    const auto& cur = trace[k];
    for (std::size_t i = 0; i < timings.size(); ++i) {
      const double line = timings[i].position();
      if (prev.X_f <= line && cur.X_f > line && signal_state(timings[i], cur.t) == SignalState::Red) {
        rep.red_violations.push_back({k, static_cast<int>(i) + 1, cur.t, prev.X_f, cur.X_f});
      }
    }
  }
  return rep;
}

struct BoundaryCheck {
  int degree;
  std::size_t signal;  // 0-based
  std::size_t boundary;
  JumpValidityReport report;
};

struct CBFValidation {
  std::vector<BoundaryCheck> boundaries;
  bool valid() const {
    for (const auto& b : boundaries) {
      if (!b.report.valid) return false;
    }
    return true;
  }
};

inline constexpr double kJumpValueTolerance = 1e-6;  // m
inline constexpr double kJumpRateTolerance = 1e-3;   // m/s

/// Admissible states of region i: X_f in (p_{i-1}, p_i], V_f in [0, V_max].
inline std::vector<StateVector> region_samples(const TrafficCBF& cbf, std::size_t region, double V_max) {
  const double hi = cbf.positions[region];
  const double lo = region > 0 ? cbf.positions[region - 1] : hi - cbf.params.terminal_spacing;
  std::vector<StateVector> out;
  constexpr int kPos = 10;
  constexpr int kVel = 11;
  for (int a = 1; a <= kPos; ++a) {
    for (int b = 0; b < kVel; ++b) {
      StateVector x = StateVector::Zero(kStateDim);
      x[kXf] = lo + (hi - lo) * a / kPos;
      x[kVf] = V_max * b / (kVel - 1);
      out.push_back(x);
    }
  }
  return out;
}

inline CBFValidation validate_cbf(const TrafficCBF& cbf, double V_max) {
  CBFValidation out;
  const double tols[] = {kJumpValueTolerance, kJumpRateTolerance};
  const std::span<const double> tol(tols, static_cast<std::size_t>(cbf.degree));
  for (std::size_t i = 0; i < cbf.regions.size(); ++i) {
    const auto samples = region_samples(cbf, i, V_max);
    const auto& region = cbf.regions[i];
    for (std::size_t b = 0; b + 1 < region.size(); ++b) {
      out.boundaries.push_back({cbf.degree, i, b, check_jump_validity(region, b, samples, tol)});
    }
  }
  return out;
}

/// Jump validity of both barrier degrees built from a scenario.
inline CBFValidation validate_scenario_cbf(const ScenarioConfig& cfg) {
  CBFValidation out;
  for (int degree : {2, 1}) {
    const auto cbf = build_scenario_cbf(cfg, degree);
    if (!cbf) continue;
    auto part = validate_cbf(*cbf, cfg.vehicle.V_max);
    out.boundaries.insert(out.boundaries.end(), part.boundaries.begin(), part.boundaries.end());
  }
  return out;
}

}  // namespace regacc
