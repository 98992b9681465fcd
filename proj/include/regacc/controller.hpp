#pragma once

/// @file
/// Nominal PID, the hard-constraint barrier conditions written as bounds on
/// the synthetic input mu = (u - F_r) / m, and the switching safety filter.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "regacc/cbf_core.hpp"
#include "regacc/errors.hpp"
#include "regacc/qp.hpp"
#include "regacc/traffic_env.hpp"
#include "regacc/vehicle.hpp"

namespace regacc {

/// Gains on V_r, the spacing error and its integral.
struct PIDGains {
  double k1 = 7.12;
  double k2 = 3.24;
  double k3 = 0.4;
};

enum class InputMode { Unconstrained, Constrained };

inline double nominal_mu(const VehicleState& s, const PIDGains& g, const VehicleParams& p) {
  return g.k1 * s.relative_velocity() + g.k2 * s.spacing_error(p) + g.k3 * s.e;
}

inline double nominal_control(const VehicleState& s, const PIDGains& g, const VehicleParams& p) {
  return force_from_mu(p, nominal_mu(s, g, p), s.V_f);
}

/// Spacing barrier; with the stopping distance it also absorbs a full
/// braking manoeuvre at a_min.
inline double h1_value(const VehicleState& s, const VehicleParams& p, bool with_stopping_distance) {
  double h = s.spacing_error(p);
  if (with_stopping_distance) {
    const double vr = s.relative_velocity();
    h -= vr * vr / (2.0 * p.a_min);
  }
  return h;
}

/// With the stopping distance, dh1/dt also depends on the lead acceleration
/// through -V_r a_l / a_min. Passing lead_accel = 0 gives the constant-lead
/// form (h - V_r/a_min) mu <= h1 + V_r.
inline MuConstraint h1_constraint(const VehicleState& s, const VehicleParams& p, bool with_stopping_distance,
                                  double lead_accel = 0.0) {
  const double vr = s.relative_velocity();
  const double h1 = h1_value(s, p, with_stopping_distance);
  if (!with_stopping_distance) return {p.headway, h1 + vr, ConstraintLabel::H1};
  return {p.headway - vr / p.a_min, h1 + vr - vr * lead_accel / p.a_min, ConstraintLabel::H1};
}

inline double h2_value(const VehicleState& s, const VehicleParams& p) { return p.V_max - s.V_f; }

inline MuConstraint h2_constraint(const VehicleState& s, const VehicleParams& p) {
  return {1.0, h2_value(s, p), ConstraintLabel::H2};
}

struct LambdaPair {
  double l1;
  double l2;
};

/// lambda_1 >= -h'/beta_0 and lambda_2 >= -h''/beta_1 at a switching state,
/// each floored at lambda_min. The first bound is taken with a lambda_min
/// margin: at equality beta_1 would start on zero and leave lambda_2 unbounded.
inline LambdaPair lambdas_from_bounds(double beta0, double h_dot, double h_ddot, double lambda_min) {
  if (!(lambda_min > 0.0)) throw ArgumentError("lambda_min must be positive");
  if (!(beta0 > 0.0)) {
    throw StateOutsideSafeSetError("beta_0 = " + std::to_string(beta0) + " <= 0 at a switching instant");
  }
  const double l1 = std::max(lambda_min, lambda_min - h_dot / beta0);
  const double beta1 = h_dot + l1 * beta0;
  if (!(beta1 > 0.0)) {
    throw StateOutsideSafeSetError("beta_1 = " + std::to_string(beta1) + " <= 0 at a switching instant");
  }
  const double l2 = std::max(lambda_min, -h_ddot / beta1);
  return {l1, l2};
}

/// Evaluated at t0 = g_ij, x0 = x(g_ij). h' is the derivative along the
/// drift so that beta_1(t0, x0) >= 0 holds by construction.
inline LambdaPair select_lambdas(const CBFPiece& piece, const ControlAffineSystem& sys, double t0,
                                 const StateVector& x0, double lambda_min) {
  const double beta0 = piece.value(t0, x0);
  const double h_dot = piece.time_derivs[0](t0, x0) + piece.state_grad(t0, x0).dot(sys.drift(t0, x0));
  const double h_ddot = piece.rel_degree >= 2 ? piece.time_derivs[1](t0, x0) : 0.0;
  return lambdas_from_bounds(beta0, h_dot, h_ddot, lambda_min);
}

struct PolePlacementGain {
  double kp;  // 1/s^2
  double kd;  // 1/s
};

/// Gain placing the poles of the (beta_0, beta_1) double integrator at
/// -lambda_1, -lambda_2: s^2 + kd s + kp = (s + l1)(s + l2).
inline PolePlacementGain pole_placement_gain(double l1, double l2) {
  if (!(l1 > 0.0) || !(l2 > 0.0)) throw ArgumentError("pole placement needs positive lambdas");
  return {l1 * l2, l1 + l2};
}

struct TrafficLocation {
  std::size_t region;
  std::size_t piece;
};

inline TrafficLocation locate(const TrafficCBF& traffic, const VehicleState& s, double t) {
  const std::size_t region = next_signal_index(traffic.stop_lines(), s.X_f);
  return {region, active_piece(traffic.regions[region], t)};
}

inline const CBFPiece& active_traffic_piece(const TrafficCBF& traffic, const VehicleState& s, double t) {
  const auto loc = locate(traffic, s, t);
  return traffic.regions[loc.region].piece(loc.piece);
}

/// mu <= h'' + kp h + kd (h' - V_f) for the degree-2 traffic barrier.
inline MuConstraint h3_constraint_deg2(const VehicleState& s, double t, const TrafficCBF& traffic,
                                       const PolePlacementGain& k) {
  if (traffic.degree != 2) throw ArgumentError("h3_constraint_deg2 needs the degree-2 traffic barrier");
  const CBFPiece& piece = active_traffic_piece(traffic, s, t);
  const StateVector x = to_vector(s);
  const double h = piece.value(t, x);
  const double h_t = piece.time_derivs[0](t, x);
  const double h_tt = piece.time_derivs[1](t, x);
  return {1.0, h_tt + k.kp * h + k.kd * (h_t - s.V_f), ConstraintLabel::H3};
}

/// gamma mu <= alpha(h3bar) + h' - V_f for the degree-1 traffic barrier.
inline MuConstraint h3_constraint_deg1(const VehicleState& s, double t, const TrafficCBF& traffic) {
  if (traffic.degree != 1) throw ArgumentError("h3_constraint_deg1 needs the degree-1 traffic barrier");
  const auto loc = locate(traffic, s, t);
  const auto& region = traffic.regions[loc.region];
  const CBFPiece& piece = region.piece(loc.piece);
  const StateVector x = to_vector(s);
  const double h = piece.value(t, x);
  const double h_t = piece.time_derivs[0](t, x);
  return {traffic.params.gamma, region.alphas()[0](h) + h_t - s.V_f, ConstraintLabel::H3};
}

struct ControllerConfig {
  VehicleParams vehicle;
  PIDGains gains;
  InputMode mode = InputMode::Constrained;
  double lambda_min = 0.1;
  /// Sample period over which u is held. When positive, the barrier
  /// conditions are also imposed at the predicted end of the hold so that
  /// they hold over the whole interval, not only at its start.
  double hold_guard_period = 0.0;
};

struct ControlOutput {
  double u = 0.0;
  double mu = 0.0;
  double u_nom = 0.0;
  double mu_nom = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  std::optional<double> h3;
  std::optional<std::size_t> region;
  bool overridden = false;
  bool qp_infeasible = false;
  std::vector<ConstraintLabel> active;
};

/// Per-episode safety filter. Holds the lambdas chosen at the last piece
/// switch; one instance per simulation.
class SafetyController {
 public:
  explicit SafetyController(ControllerConfig cfg, std::shared_ptr<const TrafficCBF> traffic = nullptr)
      : cfg_(std::move(cfg)), traffic_(std::move(traffic)) {
    cfg_.vehicle.validate();
    if (traffic_) {
      const int want = cfg_.mode == InputMode::Constrained ? 1 : 2;
      if (traffic_->degree != want) {
        throw ArgumentError("traffic barrier degree does not match the input mode");
      }
    }
  }

  const ControllerConfig& config() const { return cfg_; }
  std::optional<LambdaPair> lambdas() const { return lambdas_; }

  /// Builds the mode's constraint set, projects mu_nom onto it and maps the
  /// result back to a wheel force. An empty feasible set falls back to full
  /// braking and is flagged.
  ControlOutput filter(const VehicleState& s, double t, double lead_accel) {
    const auto& p = cfg_.vehicle;
    const bool constrained = cfg_.mode == InputMode::Constrained;
    ControlOutput out;
    out.mu_nom = nominal_mu(s, cfg_.gains, p);
    out.u_nom = force_from_mu(p, out.mu_nom, s.V_f);
    out.h1 = h1_value(s, p, constrained);
    out.h2 = h2_value(s, p);

    if (traffic_) {
      const auto loc = locate(*traffic_, s, t);
      const CBFPiece& piece = traffic_->regions[loc.region].piece(loc.piece);
      out.region = loc.region;
      out.h3 = piece.value(t, to_vector(s));
      if (!constrained) refresh_lambdas(loc, piece, s, t, lead_accel);
    }

    std::vector<MuConstraint> constraints;
    constraints.reserve(10);
    append_barriers(constraints, s, t, lead_accel);
    if (constrained) {
      constraints.push_back({-1.0, p.a_min, ConstraintLabel::InputLo});
      constraints.push_back({1.0, p.a_max - friction_force(p, s.V_f) / p.mass, ConstraintLabel::InputHi});
    }

    auto mu = project(out.mu_nom, reduce_constraints(constraints));
    if (mu && cfg_.hold_guard_period > 0.0) {
      const auto guarded = hold_guard(constraints, s, t, lead_accel, *mu, out.mu_nom);
      if (guarded) mu = guarded;
    }
    if (mu) {
      out.mu = *mu;
    } else {
      out.mu = -p.a_min;
      out.qp_infeasible = true;
    }
    out.u = force_from_mu(p, out.mu, s.V_f);
    out.overridden = out.mu != out.mu_nom;
    for (const auto& c : constraints) {
      if (c.a != 0.0 && c.a * out.mu >= c.b - 1e-9 * std::max(1.0, std::abs(c.b))) out.active.push_back(c.label);
    }
    return out;
  }

 private:
  void append_barriers(std::vector<MuConstraint>& out, const VehicleState& s, double t, double lead_accel) const {
    const bool constrained = cfg_.mode == InputMode::Constrained;
    out.push_back(h1_constraint(s, cfg_.vehicle, constrained, lead_accel));
    out.push_back(h2_constraint(s, cfg_.vehicle));
    if (!traffic_) return;
    if (constrained) {
      out.push_back(h3_constraint_deg1(s, t, *traffic_));
    } else {
      out.push_back(h3_constraint_deg2(s, t, *traffic_, gain_));
    }
  }

  /// Re-solves with the barrier constraints of the state reached after one
  /// hold period under `mu`. Returns nothing when the combined set is empty
  /// or the predicted state leaves the barrier's domain; the caller then
  /// keeps the start-of-step solution.
  std::optional<double> hold_guard(const std::vector<MuConstraint>& now, const VehicleState& s, double t,
                                   double lead_accel, double mu, double mu_nom) const {
    const auto& p = cfg_.vehicle;
    const double dt = cfg_.hold_guard_period;
    std::vector<MuConstraint> combined = now;
    try {
      const auto next = step(p, s, force_from_mu(p, mu, s.V_f), lead_accel, dt, false);
      append_barriers(combined, next, t + dt, lead_accel);
    } catch (const DomainError&) {
      return std::nullopt;
    }
    return project(mu_nom, reduce_constraints(combined));
  }

  void refresh_lambdas(const TrafficLocation& loc, const CBFPiece& piece, const VehicleState& s, double t,
                       double lead_accel) {
    const std::pair key{loc.region, loc.piece};
    if (last_piece_ && *last_piece_ == key) return;
    lambdas_ = select_lambdas(piece, mu_system(cfg_.vehicle, lead_accel), t, to_vector(s), cfg_.lambda_min);
    gain_ = pole_placement_gain(lambdas_->l1, lambdas_->l2);
    last_piece_ = key;
  }

  ControllerConfig cfg_;
  std::shared_ptr<const TrafficCBF> traffic_;
  std::optional<std::pair<std::size_t, std::size_t>> last_piece_;
  std::optional<LambdaPair> lambdas_;
  PolePlacementGain gain_{0.0, 0.0};
};

}  // namespace regacc
