#pragma once

/// @file
/// Time-varying higher-order control barrier functions defined piecewise in
/// time, with jump discontinuities between pieces.
///
/// A piece h_i(t, x) lives on the half-open interval [t_{i-1}, t_i). The
/// barrier is paired with a control-affine system x' = f(t, x) + g(t, x) u
/// with scalar input u. Relative degrees 1 and 2 are supported.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "regacc/errors.hpp"
#include "regacc/qp.hpp"

namespace regacc {

using StateVector = Eigen::VectorXd;
using StateMatrix = Eigen::MatrixXd;

using ScalarField = std::function<double(double, const StateVector&)>;
using VectorField = std::function<StateVector(double, const StateVector&)>;
using MatrixField = std::function<StateMatrix(double, const StateVector&)>;

/// Class-K function: alpha(0) = 0, strictly increasing.
class ClassK {
 public:
  struct Linear {
    double slope;
  };
  using Kind = std::variant<Linear>;

  static ClassK linear(double slope) {
    if (!(slope > 0.0) || !std::isfinite(slope)) {
      throw ArgumentError("class-K slope must be positive and finite");
    }
    return ClassK(Linear{slope});
  }

  double operator()(double r) const {
    return std::visit([r](const auto& k) { return eval(k, r); }, kind_);
  }

  double derivative(double r) const {
    return std::visit([r](const auto& k) { return deriv(k, r); }, kind_);
  }

  const Kind& kind() const { return kind_; }

 private:
  explicit ClassK(Kind kind) : kind_(kind) {}

  static double eval(const Linear& k, double r) { return k.slope * r; }
  static double deriv(const Linear& k, double) { return k.slope; }

  Kind kind_;
};

struct TimeInterval {
  double start = 0.0;
  double end = 0.0;

  bool contains(double t) const { return start <= t && t < end; }
  double length() const { return end - start; }
};

/// One smooth piece of a piecewise barrier.
///
/// `time_derivs[k - 1]` is the closed-form partial d^k h / dt^k for
/// k = 1..rel_degree. The second-order fields are consulted only for
/// relative degree 2; leaving them empty means they vanish identically.
struct CBFPiece {
  TimeInterval interval;
  int rel_degree = 1;
  ScalarField value;
  std::vector<ScalarField> time_derivs;
  VectorField state_grad;
  VectorField time_deriv_grad;  // gradient of dh/dt w.r.t. the state
  MatrixField state_hessian;

  void validate() const {
    if (rel_degree != 1 && rel_degree != 2) {
      throw ConstructionError("relative degree must be 1 or 2");
    }
    if (!(interval.start < interval.end)) {
      throw ConstructionError("piece interval must be non-empty");
    }
    if (!value || !state_grad) throw ConstructionError("piece needs value and gradient");
    if (time_derivs.size() != static_cast<std::size_t>(rel_degree)) {
      throw ConstructionError("piece needs one time derivative per relative degree");
    }
    for (const auto& d : time_derivs) {
      if (!d) throw ConstructionError("empty time derivative");
    }
  }
};

/// x' = drift(t, x) + input_gain(t, x) * u with scalar u.
struct ControlAffineSystem {
  VectorField drift;
  VectorField input_gain;
  MatrixField drift_jacobian;    // required for relative degree 2
  VectorField drift_time_deriv;  // empty: drift does not depend on t explicitly
};

class PiecewiseTVCBF {
 public:
  PiecewiseTVCBF(std::vector<CBFPiece> pieces, std::vector<ClassK> alphas)
      : pieces_(std::move(pieces)), alphas_(std::move(alphas)) {
    if (pieces_.empty()) throw ConstructionError("piecewise barrier needs at least one piece");
    const int m = pieces_.front().rel_degree;
    if (alphas_.size() != static_cast<std::size_t>(m)) {
      throw ConstructionError("need one class-K function per relative degree");
    }
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      pieces_[i].validate();
      if (pieces_[i].rel_degree != m) throw ConstructionError("mixed relative degrees");
      if (i > 0 && pieces_[i - 1].interval.end != pieces_[i].interval.start) {
        throw ConstructionError("piece intervals must be contiguous and ordered");
      }
    }
  }

  std::size_t size() const { return pieces_.size(); }
  const CBFPiece& piece(std::size_t i) const { return pieces_.at(i); }
  std::span<const CBFPiece> pieces() const { return pieces_; }
  std::span<const ClassK> alphas() const { return alphas_; }
  int rel_degree() const { return pieces_.front().rel_degree; }

  TimeInterval horizon() const { return {pieces_.front().interval.start, pieces_.back().interval.end}; }

  /// Jump instant between piece `boundary` and piece `boundary + 1`.
  double boundary_time(std::size_t boundary) const { return pieces_.at(boundary + 1).interval.start; }

  bool covers(const TimeInterval& span) const {
    const auto h = horizon();
    return h.start <= span.start && span.end <= h.end;
  }

 private:
  std::vector<CBFPiece> pieces_;
  std::vector<ClassK> alphas_;
};

namespace detail {

inline void require_in_piece(const CBFPiece& piece, double t) {
  if (!piece.interval.contains(t)) {
    throw DomainError("t = " + std::to_string(t) + " outside piece interval [" +
                      std::to_string(piece.interval.start) + ", " + std::to_string(piece.interval.end) + ")");
  }
}

inline StateVector or_zero(const VectorField& field, double t, const StateVector& x) {
  return field ? field(t, x) : StateVector::Zero(x.size());
}

inline StateMatrix or_zero(const MatrixField& field, double t, const StateVector& x) {
  return field ? field(t, x) : StateMatrix::Zero(x.size(), x.size());
}

inline constexpr double kDegenerateTolerance = 1e-12;

}  // namespace detail

/// beta_0 .. beta_{m-1} of the class-K cascade, with derivatives taken along
/// the drift (the input does not enter below order m).
inline std::vector<double> beta_cascade(const CBFPiece& piece, std::span<const ClassK> alphas, double t,
                                        const StateVector& x, const ControlAffineSystem& sys) {
  detail::require_in_piece(piece, t);
  std::vector<double> beta;
  beta.reserve(piece.rel_degree);
  const double h = piece.value(t, x);
  beta.push_back(h);
  if (piece.rel_degree == 2) {
    const double h_dot = piece.time_derivs[0](t, x) + piece.state_grad(t, x).dot(sys.drift(t, x));
    beta.push_back(h_dot + alphas[0](h));
  }
  return beta;
}

/// Reduces the order-m barrier condition
///   d/dt beta_{m-1} + alpha_m(beta_{m-1}) >= 0
/// to a * u <= b for the scalar input u of `sys`.
inline MuConstraint hocbf_mu_constraint(const CBFPiece& piece, std::span<const ClassK> alphas, double t,
                                        const StateVector& x, const ControlAffineSystem& sys) {
  detail::require_in_piece(piece, t);
  if (alphas.size() != static_cast<std::size_t>(piece.rel_degree)) {
    throw ArgumentError("need one class-K function per relative degree");
  }
  const StateVector f = sys.drift(t, x);
  const StateVector g = sys.input_gain(t, x);
  const StateVector grad = piece.state_grad(t, x);
  const double h = piece.value(t, x);
  const double h_t = piece.time_derivs[0](t, x);

  double input_coeff = 0.0;
  double drift_part = 0.0;
  if (piece.rel_degree == 1) {
    input_coeff = grad.dot(g);
    drift_part = h_t + grad.dot(f) + alphas[0](h);
  } else {
    if (std::abs(grad.dot(g)) > detail::kDegenerateTolerance) {
      throw DegenerateConstraintError("relative degree 2 requires L_g h = 0");
    }
    if (!sys.drift_jacobian) throw ArgumentError("relative degree 2 needs the drift Jacobian");
    const double h_tt = piece.time_derivs[1](t, x);
    const StateVector grad_t = detail::or_zero(piece.time_deriv_grad, t, x);
    const StateMatrix hess = detail::or_zero(piece.state_hessian, t, x);
    const StateMatrix jac = sys.drift_jacobian(t, x);
    const StateVector f_t = detail::or_zero(sys.drift_time_deriv, t, x);

    const double h_dot = h_t + grad.dot(f);
    const double beta1 = h_dot + alphas[0](h);
    // d/dt (h_t + grad . f) = h_tt + 2 grad_t . f + f' H f + grad . f_t + grad . J f  (+ input terms)
    const double beta1_dot_drift = h_tt + 2.0 * grad_t.dot(f) + f.dot(hess * f) + grad.dot(f_t) +
                                   grad.dot(jac * f) + alphas[0].derivative(h) * h_dot;
    input_coeff = grad_t.dot(g) + f.dot(hess * g) + grad.dot(jac * g);
    drift_part = beta1_dot_drift + alphas[1](beta1);
  }

  if (std::abs(input_coeff) <= detail::kDegenerateTolerance) {
    // A barrier that does not depend on the state evolves independently of
    // the input; the condition is then a pure feasibility statement.
    if (grad.isZero(0.0)) return {0.0, drift_part, ConstraintLabel::Generic};
    throw DegenerateConstraintError("input coefficient vanishes at relative degree " +
                                    std::to_string(piece.rel_degree));
  }
  return {-input_coeff, drift_part, ConstraintLabel::Generic};
}

struct JumpValidityReport {
  bool valid = true;
  double boundary_time = 0.0;
  /// Minimum over samples of (incoming - outgoing) for derivative order k.
  std::vector<double> worst_margin;
};

/// Checks d^k/dt^k h_{i+1}(t_i^+, x) >= d^k/dt^k h_i(t_i^-, x) - tol_k for
/// k = 0..m-1 on every sample. One-sided values come from each piece's own
/// closed form, never from differencing across the jump.
inline JumpValidityReport check_jump_validity(const PiecewiseTVCBF& cbf, std::size_t boundary,
                                              std::span<const StateVector> samples,
                                              std::span<const double> tolerances) {
  if (samples.empty()) throw ArgumentError("check_jump_validity needs at least one state sample");
  if (boundary + 1 >= cbf.size()) throw ArgumentError("boundary index is not interior to the horizon");
  const auto m = static_cast<std::size_t>(cbf.rel_degree());
  if (tolerances.size() != 1 && tolerances.size() != m) {
    throw ArgumentError("give one tolerance or one per derivative order");
  }
  const CBFPiece& before = cbf.piece(boundary);
  const CBFPiece& after = cbf.piece(boundary + 1);
  const double tb = cbf.boundary_time(boundary);

  auto order_k = [](const CBFPiece& p, std::size_t k, const StateVector& x, double t) {
    return k == 0 ? p.value(t, x) : p.time_derivs[k - 1](t, x);
  };

  JumpValidityReport report;
  report.boundary_time = tb;
  report.worst_margin.assign(m, std::numeric_limits<double>::infinity());
  for (const auto& x : samples) {
    for (std::size_t k = 0; k < m; ++k) {
      const double margin = order_k(after, k, x, tb) - order_k(before, k, x, tb);
      report.worst_margin[k] = std::min(report.worst_margin[k], margin);
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double tol = tolerances.size() == 1 ? tolerances[0] : tolerances[k];
    if (report.worst_margin[k] < -tol) report.valid = false;
  }
  return report;
}

inline JumpValidityReport check_jump_validity(const PiecewiseTVCBF& cbf, std::size_t boundary,
                                              std::span<const StateVector> samples, double tol) {
  const double tols[] = {tol};
  return check_jump_validity(cbf, boundary, samples, std::span<const double>(tols));
}

/// Index of the piece whose interval contains t. At a boundary this is the
/// incoming piece.
inline std::size_t active_piece(const PiecewiseTVCBF& cbf, double t) {
  const auto h = cbf.horizon();
  if (!(h.start <= t && t < h.end)) {
    throw DomainError("t = " + std::to_string(t) + " outside barrier horizon");
  }
  const auto pieces = cbf.pieces();
  auto it = std::upper_bound(pieces.begin(), pieces.end(), t,
                             [](double tt, const CBFPiece& p) { return tt < p.interval.start; });
  return static_cast<std::size_t>(std::distance(pieces.begin(), it)) - 1;
}

}  // namespace regacc
