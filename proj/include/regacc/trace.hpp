#pragma once

/// @file
/// Per-step simulation records and their CSV form.
///
/// Columns, in order:
///   t,X_f,V_f,X_l,V_l,u,mu,u_nom,h1,h2,h3,signal,signal_state,active,qp_infeasible
/// Numbers use the shortest fixed-point text that round-trips exactly.
/// `h3`, `signal_state` and `active` may be empty; `signal` is 1-based with
/// 0 meaning no signal; `active` joins constraint labels with '|'.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "regacc/errors.hpp"
#include "regacc/qp.hpp"
#include "regacc/traffic_env.hpp"

namespace regacc {

struct TraceRecord {
  double t = 0.0;
  double X_f = 0.0;
  double V_f = 0.0;
  double X_l = 0.0;
  double V_l = 0.0;
  double u = 0.0;
  double mu = 0.0;
  double u_nom = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  std::optional<double> h3;
  int signal = 0;
  std::optional<SignalState> signal_state;
  std::vector<ConstraintLabel> active;
  bool qp_infeasible = false;
};

using Trace = std::vector<TraceRecord>;

inline constexpr std::string_view kTraceHeader =
    "t,X_f,V_f,X_l,V_l,u,mu,u_nom,h1,h2,h3,signal,signal_state,active,qp_infeasible";

class TraceFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_number(std::ostream& os, double v) {
  char buf[512];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  if (res.ec != std::errc{}) throw TraceFormatError("number too long for the trace format");
  os.write(buf, res.ptr - buf);
}

inline double get_number(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw TraceFormatError("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<SignalState> parse_signal_state(std::string_view s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  for (auto st : {SignalState::Green, SignalState::Yellow, SignalState::Red}) {
    if (s == to_string(st)) return st;
  }
  throw TraceFormatError("line " + std::to_string(line) + ": bad signal state '" + std::string(s) + "'");
}

inline ConstraintLabel parse_label(std::string_view s, std::size_t line) {
  for (auto l : {ConstraintLabel::Generic, ConstraintLabel::H1, ConstraintLabel::H2, ConstraintLabel::H3,
                 ConstraintLabel::InputLo, ConstraintLabel::InputHi}) {
    if (s == to_string(l)) return l;
  }
  throw TraceFormatError("line " + std::to_string(line) + ": bad constraint label '" + std::string(s) + "'");
}

}  // namespace detail

inline void write_trace(std::ostream& os, const Trace& trace) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace) {
    for (double v : {r.t, r.X_f, r.V_f, r.X_l, r.V_l, r.u, r.mu, r.u_nom, r.h1, r.h2}) {
      detail::put_number(os, v);
      os << ',';
    }
    if (r.h3) detail::put_number(os, *r.h3);
    os << ',' << r.signal << ',';
    if (r.signal_state) os << to_string(*r.signal_state);
    os << ',';
    for (std::size_t i = 0; i < r.active.size(); ++i) {
      if (i) os << '|';
      os << to_string(r.active[i]);
    }
    os << ',' << (r.qp_infeasible ? 1 : 0) << '\n';
  }
}

inline Trace read_trace(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader) throw TraceFormatError("missing or unexpected header");
  Trace out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = detail::split(line, ',');
    if (cols.size() != 15) throw TraceFormatError("line " + std::to_string(lineno) + ": expected 15 columns");
    TraceRecord r;
    double* nums[] = {&r.t, &r.X_f, &r.V_f, &r.X_l, &r.V_l, &r.u, &r.mu, &r.u_nom, &r.h1, &r.h2};
    for (std::size_t i = 0; i < 10; ++i) *nums[i] = detail::get_number(cols[i], lineno);
    if (!cols[10].empty()) r.h3 = detail::get_number(cols[10], lineno);
    r.signal = static_cast<int>(detail::get_number(cols[11], lineno));
    r.signal_state = detail::parse_signal_state(cols[12], lineno);
    if (!cols[13].empty()) {
      for (auto l : detail::split(cols[13], '|')) r.active.push_back(detail::parse_label(l, lineno));
    }
    if (cols[14] != "0" && cols[14] != "1") {
      throw TraceFormatError("line " + std::to_string(lineno) + ": qp_infeasible must be 0 or 1");
    }
    r.qp_infeasible = cols[14] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

inline void export_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_trace(os, trace);
  os.flush();
  if (!os) throw std::runtime_error("failed writing trace to " + path.string());
}

inline Trace import_trace(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_trace(is);
}

}  // namespace regacc
