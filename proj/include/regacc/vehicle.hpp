#pragma once

/// @file
/// Longitudinal ego/lead dynamics with quadratic resistance.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "regacc/cbf_core.hpp"
#include "regacc/errors.hpp"

namespace regacc {

inline constexpr double kGravity = 9.8;

struct VehicleParams {
  double mass = 1650.0;              // kg
  double c0 = 0.1;                   // N
  double c1 = 5.0;                   // N / (m/s)
  double c2 = 0.25;                  // N / (m/s)^2
  double headway = 1.4;              // s
  double S0 = 4.5;                   // m
  double a_max = 0.2 * kGravity;     // m/s^2
  double a_min = 0.4 * kGravity;     // m/s^2, braking magnitude
  double V_max = 16.67;              // m/s

  void validate() const {
    if (!(mass > 0.0)) throw ConstructionError("vehicle mass must be positive");
    if (c0 < 0.0 || c1 < 0.0 || c2 < 0.0) throw ConstructionError("resistance coefficients must be >= 0");
    if (!(headway > 0.0)) throw ConstructionError("headway must be positive");
    if (S0 < 0.0) throw ConstructionError("S0 must be >= 0");
    if (!(a_max > 0.0) || !(a_min > 0.0)) throw ConstructionError("a_max and a_min must be positive");
    if (!(V_max > 0.0)) throw ConstructionError("V_max must be positive");
  }
};

struct VehicleState {
  double X_f = 0.0;
  double V_f = 0.0;
  double X_l = 0.0;
  double V_l = 0.0;
  double e = 0.0;  // integral of the spacing error

  double relative_distance() const { return X_l - X_f; }
  double relative_velocity() const { return V_l - V_f; }
  double spacing_error(const VehicleParams& p) const { return X_l - X_f - p.headway * V_f - p.S0; }
};

/// Layout of VehicleState as a barrier state vector.
enum StateIndex : Eigen::Index { kXf = 0, kVf = 1, kXl = 2, kE = 3, kVl = 4 };
inline constexpr Eigen::Index kStateDim = 5;

inline StateVector to_vector(const VehicleState& s) {
  StateVector x(kStateDim);
  x << s.X_f, s.V_f, s.X_l, s.e, s.V_l;
  return x;
}

inline VehicleState from_vector(const StateVector& x) {
  return {x[kXf], x[kVf], x[kXl], x[kVl], x[kE]};
}

inline double friction_force(const VehicleParams& p, double V_f) {
  if (V_f < 0.0) throw DomainError("friction_force: negative velocity");
  return p.c0 + p.c1 * V_f + p.c2 * V_f * V_f;
}

inline double mu_from_force(const VehicleParams& p, double u, double V_f) {
  return (u - friction_force(p, V_f)) / p.mass;
}

inline double force_from_mu(const VehicleParams& p, double mu, double V_f) {
  return friction_force(p, V_f) + p.mass * mu;
}

struct StateDerivative {
  double X_f = 0.0;
  double V_f = 0.0;
  double X_l = 0.0;
  double V_l = 0.0;
  double e = 0.0;
};

/// Time derivative of the state under wheel force u. A vehicle at rest
/// whose net force points backwards stays at rest.
inline StateDerivative dynamics_deriv(const VehicleParams& p, const VehicleState& s, double u,
                                      double lead_accel) {
  const double v_f = std::max(s.V_f, 0.0);
  const double v_l = std::max(s.V_l, 0.0);
  StateDerivative d;
  d.X_f = v_f;
  d.V_f = (u - friction_force(p, v_f)) / p.mass;
  if (s.V_f <= 0.0 && d.V_f < 0.0) d.V_f = 0.0;
  d.X_l = v_l;
  d.V_l = (s.V_l <= 0.0 && lead_accel < 0.0) ? 0.0 : lead_accel;
  d.e = (s.X_l - s.X_f) - p.headway * v_f - p.S0;
  return d;
}

namespace detail {

inline VehicleState advance(const VehicleState& s, const StateDerivative& d, double h, bool integrate_error) {
  return {s.X_f + h * d.X_f, s.V_f + h * d.V_f, s.X_l + h * d.X_l, s.V_l + h * d.V_l,
          integrate_error ? s.e + h * d.e : s.e};
}

}  // namespace detail

/// Classical RK4 step with the inputs held over the step. Velocities are
/// clipped at zero afterwards. With `integrate_error` false the spacing
/// error integral is frozen for this step.
inline VehicleState step(const VehicleParams& p, const VehicleState& s, double u, double lead_accel, double dt,
                         bool integrate_error = true) {
  if (!(dt > 0.0)) throw ArgumentError("step: dt must be positive");
  const auto k1 = dynamics_deriv(p, s, u, lead_accel);
  const auto k2 = dynamics_deriv(p, detail::advance(s, k1, dt / 2, integrate_error), u, lead_accel);
  const auto k3 = dynamics_deriv(p, detail::advance(s, k2, dt / 2, integrate_error), u, lead_accel);
  const auto k4 = dynamics_deriv(p, detail::advance(s, k3, dt, integrate_error), u, lead_accel);
  auto blend = [dt](double a, double b, double c, double d) { return dt / 6.0 * (a + 2.0 * b + 2.0 * c + d); };

  VehicleState out = s;
  out.X_f += blend(k1.X_f, k2.X_f, k3.X_f, k4.X_f);
  out.V_f += blend(k1.V_f, k2.V_f, k3.V_f, k4.V_f);
  out.X_l += blend(k1.X_l, k2.X_l, k3.X_l, k4.X_l);
  out.V_l += blend(k1.V_l, k2.V_l, k3.V_l, k4.V_l);
  if (integrate_error) out.e += blend(k1.e, k2.e, k3.e, k4.e);
  out.V_f = std::max(out.V_f, 0.0);
  out.V_l = std::max(out.V_l, 0.0);

  for (double v : {out.X_f, out.V_f, out.X_l, out.V_l, out.e}) {
    if (!std::isfinite(v)) throw NumericError("vehicle step produced a non-finite state", 0);
  }
  return out;
}

/// Barrier-side view of the dynamics with mu as the input:
/// x = (X_f, V_f, X_l, e, V_l), f = (V_f, 0, V_l, X_r - h V_f - S0, a_l), g = e_{V_f}.
inline ControlAffineSystem mu_system(const VehicleParams& p, double lead_accel) {
  ControlAffineSystem sys;
  sys.drift = [p, lead_accel](double, const StateVector& x) {
    StateVector f(kStateDim);
    f[kXf] = x[kVf];
    f[kVf] = 0.0;
    f[kXl] = x[kVl];
    f[kE] = x[kXl] - x[kXf] - p.headway * x[kVf] - p.S0;
    f[kVl] = lead_accel;
    return f;
  };
  sys.input_gain = [](double, const StateVector&) {
    StateVector g = StateVector::Zero(kStateDim);
    g[kVf] = 1.0;
    return g;
  };
  sys.drift_jacobian = [p](double, const StateVector&) {
    StateMatrix j = StateMatrix::Zero(kStateDim, kStateDim);
    j(kXf, kVf) = 1.0;
    j(kXl, kVl) = 1.0;
    j(kE, kXl) = 1.0;
    j(kE, kXf) = -1.0;
    j(kE, kVf) = -p.headway;
    return j;
  };
  return sys;
}

/// Piecewise-constant lead acceleration.
struct LeadProfile {
  struct Breakpoint {
    double t;
    double accel;
  };
  double initial_velocity = 0.0;
  std::vector<Breakpoint> breakpoints;

  void validate() const {
    if (initial_velocity < 0.0) throw ConstructionError("lead initial velocity must be >= 0");
    for (std::size_t i = 1; i < breakpoints.size(); ++i) {
      if (!(breakpoints[i - 1].t < breakpoints[i].t)) {
        throw ConstructionError("lead profile breakpoints must be strictly increasing");
      }
    }
  }
};

struct LeadSample {
  double velocity = 0.0;
  double accel = 0.0;
};

/// Exact integral of the profile up to t. Acceleration before the first
/// breakpoint is zero and the last breakpoint holds forever. The velocity
/// stops at zero instead of going negative.
inline LeadSample lead_velocity(const LeadProfile& profile, double t) {
  double v = profile.initial_velocity;
  double accel_now = 0.0;
  const auto& bps = profile.breakpoints;
  for (std::size_t i = 0; i < bps.size() && bps[i].t <= t; ++i) {
    const double seg_end = (i + 1 < bps.size()) ? std::min(bps[i + 1].t, t) : t;
    v = std::max(0.0, v + bps[i].accel * (seg_end - bps[i].t));
    accel_now = bps[i].accel;
  }
  if (v <= 0.0 && accel_now < 0.0) accel_now = 0.0;
  return {v, accel_now};
}

}  // namespace regacc
