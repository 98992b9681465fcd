#pragma once

/// @file
/// Traffic signal timing and the barrier that encodes "stop at p_i while
/// signal i is red".
///
/// For ego positions p_{i-1} < X_f <= p_i and each cycle
/// g_ij <= t < g_{i,j+1} the barrier is
///
///   h_i(t, x) = (p_{i+1} - p_i) / (1 + exp(tau (t - m_ij))) + p_i - X_f - S0,
///   m_ij = (y_ij + r_ij) / 2.
///
/// The logistic term keeps the stop line effectively at p_{i+1} during green
/// and slides it back to p_i around the middle of the yellow/red transition.
/// It jumps back up at each new green, which is the only discontinuity.
/// The degree-1 variant replaces S0 by the braking headway gamma * V_f.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regacc/cbf_core.hpp"
#include "regacc/errors.hpp"
#include "regacc/vehicle.hpp"

namespace regacc {

enum class SignalState { Green, Yellow, Red };

constexpr std::string_view to_string(SignalState s) {
  switch (s) {
    case SignalState::Green: return "Green";
    case SignalState::Yellow: return "Yellow";
    case SignalState::Red: return "Red";
  }
  return "Red";
}

struct SignalCycle {
  double green;   // g_ij
  double yellow;  // y_ij
  double red;     // r_ij
};

/// Stop-line position and its broadcast sequence (g_i1, y_i1, r_i1, g_i2, ...).
/// The red of the last cycle lasts until `end`.
class SignalTiming {
 public:
  SignalTiming(double position, std::vector<SignalCycle> cycles, double end)
      : position_(position), cycles_(std::move(cycles)), end_(end) {
    if (cycles_.empty()) throw ConstructionError("signal needs at least one cycle");
    for (std::size_t j = 0; j < cycles_.size(); ++j) {
      const auto& c = cycles_[j];
      const double next = j + 1 < cycles_.size() ? cycles_[j + 1].green : end_;
      if (!(c.green < c.yellow && c.yellow < c.red && c.red < next)) {
        throw ConstructionError("signal cycles must satisfy g < y < r < next g");
      }
    }
  }

  /// Uniform cycles whose green phases start at offset + k * (green + yellow + red),
  /// generated so that [from, until] is covered.
  static SignalTiming periodic(double position, double offset, double green, double yellow, double red,
                               double from, double until) {
    if (!(green > 0.0 && yellow > 0.0 && red > 0.0)) {
      throw ConstructionError("signal phase durations must be positive");
    }
    const double cycle = green + yellow + red;
    const double k0 = std::floor((from - offset) / cycle);
    std::vector<SignalCycle> cycles;
    double g = offset + k0 * cycle;
    for (double k = k0; g <= until; ++k) {
      g = offset + k * cycle;
      cycles.push_back({g, g + green, g + green + yellow});
      g += cycle;
    }
    return SignalTiming(position, std::move(cycles), g);
  }

  double position() const { return position_; }
  std::span<const SignalCycle> cycles() const { return cycles_; }
  double end() const { return end_; }
  TimeInterval coverage() const { return {cycles_.front().green, end_}; }

  /// Start of the cycle after j (the end of j's red phase).
  double next_green(std::size_t j) const { return j + 1 < cycles_.size() ? cycles_[j + 1].green : end_; }

  /// Cycle j with g_ij <= t < g_{i,j+1}.
  std::size_t cycle_index(double t) const {
    if (!coverage().contains(t)) {
      throw HorizonError("t = " + std::to_string(t) + " outside the broadcast timing of the signal at " +
                         std::to_string(position_));
    }
    auto it = std::upper_bound(cycles_.begin(), cycles_.end(), t,
                               [](double tt, const SignalCycle& c) { return tt < c.green; });
    return static_cast<std::size_t>(std::distance(cycles_.begin(), it)) - 1;
  }

 private:
  double position_;
  std::vector<SignalCycle> cycles_;
  double end_;
};

inline SignalState signal_state(const SignalTiming& sig, double t) {
  const auto& c = sig.cycles()[sig.cycle_index(t)];
  if (t < c.yellow) return SignalState::Green;
  if (t < c.red) return SignalState::Yellow;
  return SignalState::Red;
}

/// Index i (0-based) with p_{i-1} < X_f <= p_i.
inline std::size_t next_signal_index(std::span<const double> positions, double X_f) {
  auto it = std::lower_bound(positions.begin(), positions.end(), X_f);
  if (it == positions.end()) {
    throw PastLastSignalError("X_f = " + std::to_string(X_f) + " is past the last stop line");
  }
  return static_cast<std::size_t>(std::distance(positions.begin(), it));
}

struct TrafficCBFParams {
  double tau = 6.0;                // 1/s
  double S0 = 4.5;                 // m
  double gamma = 16.67 / (0.4 * kGravity);  // s, degree-1 braking headway
  double terminal_spacing = 1000.0;  // m, virtual stop line past the last signal
  double alpha = 1.0;              // class-K slope for every order

  void validate() const {
    if (!(tau > 0.0)) throw ConstructionError("tau must be positive");
    if (S0 < 0.0) throw ConstructionError("S0 must be >= 0");
    if (gamma < 0.0) throw ConstructionError("gamma must be >= 0");
    if (!(terminal_spacing > 0.0)) throw ConstructionError("terminal spacing must be positive");
    if (!(alpha > 0.0)) throw ConstructionError("class-K slope must be positive");
  }
};

/// Logistic term (p_{i+1} - p_i) / (1 + exp(tau (t - midpoint))).
struct SigmoidTerm {
  double span;
  double midpoint;
  double tau;
};

struct SigmoidValues {
  double value;
  double d1;
  double d2;
};

inline SigmoidValues sigmoid_derivs(const SigmoidTerm& term, double t) {
  const double z = term.tau * (t - term.midpoint);
  // sigma = 1 / (1 + e^z), rest = 1 - sigma, both without overflow.
  double sigma;
  double rest;
  if (z > 0.0) {
    const double ez = std::exp(-z);
    sigma = ez / (1.0 + ez);
    rest = 1.0 / (1.0 + ez);
  } else {
    const double ez = std::exp(z);
    sigma = 1.0 / (1.0 + ez);
    rest = ez / (1.0 + ez);
  }
  const double s = term.span;
  const double tau = term.tau;
  return {s * sigma, -tau * s * sigma * rest, tau * tau * s * sigma * rest * (rest - sigma)};
}

/// Piecewise barrier per stop-line region, plus the data it was built from.
struct TrafficCBF {
  int degree = 2;
  TrafficCBFParams params;
  /// p_1..p_n followed by the virtual p_{n+1}.
  std::vector<double> positions;
  std::vector<PiecewiseTVCBF> regions;
  /// sigmoids[i][j] belongs to regions[i].piece(j).
  std::vector<std::vector<SigmoidTerm>> sigmoids;

  std::size_t signal_count() const { return regions.size(); }
  std::span<const double> stop_lines() const { return {positions.data(), regions.size()}; }
};

namespace detail {

inline CBFPiece traffic_piece(TimeInterval interval, const SigmoidTerm& term, double stop_line, int degree,
                              const TrafficCBFParams& params) {
  CBFPiece piece;
  piece.interval = interval;
  piece.rel_degree = degree;
  if (degree == 2) {
    const double offset = stop_line - params.S0;
    piece.value = [term, offset](double t, const StateVector& x) {
      return sigmoid_derivs(term, t).value + offset - x[kXf];
    };
    piece.state_grad = [](double, const StateVector& x) {
      StateVector g = StateVector::Zero(x.size());
      g[kXf] = -1.0;
      return g;
    };
  } else {
    const double gamma = params.gamma;
    piece.value = [term, stop_line, gamma](double t, const StateVector& x) {
      return sigmoid_derivs(term, t).value + stop_line - x[kXf] - gamma * x[kVf];
    };
    piece.state_grad = [gamma](double, const StateVector& x) {
      StateVector g = StateVector::Zero(x.size());
      g[kXf] = -1.0;
      g[kVf] = -gamma;
      return g;
    };
  }
  piece.time_derivs.push_back([term](double t, const StateVector&) { return sigmoid_derivs(term, t).d1; });
  if (degree == 2) {
    piece.time_derivs.push_back([term](double t, const StateVector&) { return sigmoid_derivs(term, t).d2; });
  }
  return piece;
}

inline void check_signal_order(std::span<const SignalTiming> signals) {
  if (signals.empty()) throw ConstructionError("traffic barrier needs at least one signal");
  for (std::size_t i = 1; i < signals.size(); ++i) {
    if (!(signals[i - 1].position() < signals[i].position())) {
      throw ConstructionError("signal positions must be strictly increasing");
    }
  }
}

}  // namespace detail

/// Builds one piecewise barrier per stop-line region with pieces
/// [g_ij, g_{i,j+1}).
inline TrafficCBF build_traffic_cbf(std::span<const SignalTiming> signals, const TrafficCBFParams& params,
                                    const TimeInterval& horizon, int degree) {
  if (degree != 1 && degree != 2) throw ConstructionError("traffic barrier degree must be 1 or 2");
  params.validate();
  detail::check_signal_order(signals);

  TrafficCBF out;
  out.degree = degree;
  out.params = params;
  for (const auto& s : signals) out.positions.push_back(s.position());
  out.positions.push_back(signals.back().position() + params.terminal_spacing);

  for (std::size_t i = 0; i < signals.size(); ++i) {
    const auto& sig = signals[i];
    const auto cover = sig.coverage();
    if (!(cover.start <= horizon.start && horizon.end <= cover.end)) {
      throw ConstructionError("timing of the signal at " + std::to_string(sig.position()) +
                              " does not cover the horizon");
    }
    const double span = out.positions[i + 1] - out.positions[i];
    std::vector<CBFPiece> pieces;
    std::vector<SigmoidTerm> terms;
    for (std::size_t j = 0; j < sig.cycles().size(); ++j) {
      const auto& c = sig.cycles()[j];
      const SigmoidTerm term{span, 0.5 * (c.yellow + c.red), params.tau};
      pieces.push_back(detail::traffic_piece({c.green, sig.next_green(j)}, term, sig.position(), degree, params));
      terms.push_back(term);
    }
    std::vector<ClassK> alphas(static_cast<std::size_t>(degree), ClassK::linear(params.alpha));
    out.regions.emplace_back(std::move(pieces), std::move(alphas));
    out.sigmoids.push_back(std::move(terms));
  }
  return out;
}

/// The discontinuous candidate that drops the stop line from p_{i+1} to p_i
/// at every red onset: pieces [g_ij, r_ij) and [r_ij, g_{i,j+1}). Its jumps
/// at r_ij shrink the safe set, so it fails the jump-validity check.
inline TrafficCBF build_candidate_cbf(std::span<const SignalTiming> signals, double terminal_spacing,
                                      const TimeInterval& horizon) {
  detail::check_signal_order(signals);
  TrafficCBF out;
  out.degree = 1;
  out.params.terminal_spacing = terminal_spacing;
  for (const auto& s : signals) out.positions.push_back(s.position());
  out.positions.push_back(signals.back().position() + terminal_spacing);

  auto line_piece = [](TimeInterval interval, double line) {
    CBFPiece p;
    p.interval = interval;
    p.rel_degree = 1;
    p.value = [line](double, const StateVector& x) { return line - x[kXf]; };
    p.time_derivs.push_back([](double, const StateVector&) { return 0.0; });
    p.state_grad = [](double, const StateVector& x) {
      StateVector g = StateVector::Zero(x.size());
      g[kXf] = -1.0;
      return g;
    };
    return p;
  };

  for (std::size_t i = 0; i < signals.size(); ++i) {
    const auto& sig = signals[i];
    const auto cover = sig.coverage();
    if (!(cover.start <= horizon.start && horizon.end <= cover.end)) {
      throw ConstructionError("signal timing does not cover the horizon");
    }
    std::vector<CBFPiece> pieces;
    for (std::size_t j = 0; j < sig.cycles().size(); ++j) {
      const auto& c = sig.cycles()[j];
      pieces.push_back(line_piece({c.green, c.red}, out.positions[i + 1]));
      pieces.push_back(line_piece({c.red, sig.next_green(j)}, out.positions[i]));
    }
    out.regions.emplace_back(std::move(pieces), std::vector<ClassK>{ClassK::linear(1.0)});
    out.sigmoids.emplace_back();
  }
  return out;
}

/// Smooth under-approximation of min(terms): -ln sum exp(-term).
inline double softmin(std::span<const double> terms) {
  if (terms.empty()) throw ArgumentError("softmin of an empty set");
  const double lo = *std::min_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double v : terms) acc += std::exp(-(v - lo));
  return lo - std::log(acc);
}

/// Log-sum-exp bound over the current and upcoming cycles of signal i
/// (0-based). Each cycle contributes the candidate's two phase values
/// p_{i+1} - x (green/yellow) and p_i - x (red).
inline double conservative_softmin_bound(std::span<const SignalTiming> signals, double terminal_spacing,
                                         std::size_t i, double t, double x) {
  if (i >= signals.size()) throw ArgumentError("signal index out of range");
  const double p_i = signals[i].position();
  const double p_next = i + 1 < signals.size() ? signals[i + 1].position() : p_i + terminal_spacing;
  const double p_prev = i > 0 ? signals[i - 1].position() : -std::numeric_limits<double>::infinity();
  if (!(p_prev < x && x <= p_i)) throw DomainError("conservative_softmin_bound: x not in region i");

  std::vector<double> terms;
  const auto& sig = signals[i];
  for (std::size_t j = 0; j < sig.cycles().size(); ++j) {
    if (sig.next_green(j) <= t) continue;
    terms.push_back(p_next - x);
    terms.push_back(p_i - x);
  }
  if (terms.empty()) throw HorizonError("no current or upcoming cycle at t = " + std::to_string(t));
  return softmin(terms);
}

struct Transition {
  SignalState to;
  double time;
};

/// What signal i announces for the window [t, t + horizon].
struct SignalBroadcast {
  double position;
  std::optional<SignalState> state;  // empty when t is outside the timing
  std::vector<Transition> transitions;
};

inline std::vector<SignalBroadcast> broadcast(std::span<const SignalTiming> signals, double t, double horizon) {
  if (!(horizon > 0.0)) throw ArgumentError("broadcast horizon must be positive");
  std::vector<SignalBroadcast> out;
  out.reserve(signals.size());
  const double until = t + horizon;
  for (const auto& sig : signals) {
    SignalBroadcast b{sig.position(), std::nullopt, {}};
    if (sig.coverage().contains(t)) b.state = signal_state(sig, t);
    auto emit = [&](SignalState s, double at) {
      if (t <= at && at <= until) b.transitions.push_back({s, at});
    };
    for (const auto& c : sig.cycles()) {
      if (c.green > until) break;
      emit(SignalState::Green, c.green);
      emit(SignalState::Yellow, c.yellow);
      emit(SignalState::Red, c.red);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace regacc
