#pragma once

/// @file
/// Exact solver for the one-dimensional safety-filter QP
///   min |mu - mu_nom|^2  s.t.  a_k * mu <= b_k,  mu in [lo, hi].
/// Every constraint is a half-line, so the feasible set is an interval and
/// the minimizer is a clamp.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string_view>

namespace regacc {

enum class ConstraintLabel { Generic, H1, H2, H3, InputLo, InputHi };

constexpr std::string_view to_string(ConstraintLabel label) {
  switch (label) {
    case ConstraintLabel::Generic: return "Generic";
    case ConstraintLabel::H1: return "H1";
    case ConstraintLabel::H2: return "H2";
    case ConstraintLabel::H3: return "H3";
    case ConstraintLabel::InputLo: return "InputLo";
    case ConstraintLabel::InputHi: return "InputHi";
  }
  return "Generic";
}

/// One linear inequality a * mu <= b on the synthetic input mu.
struct MuConstraint {
  double a = 0.0;
  double b = 0.0;
  ConstraintLabel label = ConstraintLabel::Generic;

  bool satisfied_by(double mu, double tol = 0.0) const { return a * mu <= b + tol; }
};

struct InputBox {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// Set of admissible mu. Empty iff lo > hi.
struct FeasibleInterval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool empty() const { return lo > hi; }
  bool contains(double mu) const { return lo <= mu && mu <= hi; }

  static FeasibleInterval make_empty() {
    return {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  }
};

/// Slack below zero tolerated on constraints with a == 0.
inline constexpr double kVacuousTolerance = 1e-12;

inline FeasibleInterval reduce_constraints(std::span<const MuConstraint> constraints,
                                           std::optional<InputBox> box = std::nullopt) {
  FeasibleInterval out;
  if (box) {
    out.lo = box->lo;
    out.hi = box->hi;
  }
  for (const auto& c : constraints) {
    if (c.a > 0.0) {
      out.hi = std::min(out.hi, c.b / c.a);
    } else if (c.a < 0.0) {
      out.lo = std::max(out.lo, c.b / c.a);
    } else if (c.b < -kVacuousTolerance) {
      return FeasibleInterval::make_empty();
    }
  }
  if (out.empty()) return FeasibleInterval::make_empty();
  return out;
}

/// Minimizer of |mu - mu_nom|^2 over the interval; nullopt when it is empty.
inline std::optional<double> project(double mu_nom, const FeasibleInterval& interval) {
  if (interval.empty()) return std::nullopt;
  return std::clamp(mu_nom, interval.lo, interval.hi);
}

}  // namespace regacc
