// Command-line front end: run a scenario, audit a trace, check barrier jumps.
//
// Exit codes: 0 clean, 1 usage or configuration error, 2 a check failed
// (hard-constraint violation or invalid barrier), 3 a QP step was infeasible.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "regacc/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolation = 2;
constexpr int kExitInfeasible = 3;

void print_report(const regacc::HardConstraintReport& r) {
  std::printf("min h1            %.6f m\n", r.min_h1);
  std::printf("min spacing error %.6f m\n", r.min_spacing_error);
  std::printf("max V_f - V_max   %.6f m/s\n", r.max_speed_excess);
  std::printf("min V_f           %.6f m/s\n", r.min_speed);
  if (std::isfinite(r.min_h3)) {
    std::printf("min h3            %.6f m\n", r.min_h3);
  } else {
    std::printf("min h3            n/a\n");
  }
  std::printf("red-light crossings %zu\n", r.red_violations.size());
  for (const auto& v : r.red_violations) {
    std::printf("  signal %d at t=%.2f s: X_f %.4f -> %.4f\n", v.signal, v.t, v.X_before, v.X_after);
  }
  std::printf("infeasible steps  %zu\n", r.qp_infeasible_steps);
}

int cmd_run(const std::string& config, const std::string& out, const std::string& mode) {
  auto cfg = regacc::load_scenario(config);
  if (mode == "constrained") cfg.mode = regacc::InputMode::Constrained;
  if (mode == "unconstrained") cfg.mode = regacc::InputMode::Unconstrained;

  const auto result = regacc::run(cfg);
  if (out == "-") {
    regacc::write_trace(std::cout, result.trace);
  } else if (!out.empty()) {
    regacc::export_trace(result.trace, out);
  }
  auto& log = out == "-" ? std::cerr : std::cout;
  log << "steps " << result.trace.size() << ", stopped at " << regacc::to_string(result.stop) << '\n';
  if (!result.trace.empty()) {
    const auto rep = regacc::verify_hard_constraints(result.trace, cfg);
    log << "hard constraints " << (rep.satisfied() ? "satisfied" : "VIOLATED") << '\n';
  }
  if (result.infeasible_steps > 0) {
    log << result.infeasible_steps << " infeasible QP steps\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

int cmd_verify(const std::string& trace_path, const std::string& config) {
  const auto cfg = regacc::load_scenario(config);
  const auto trace = regacc::import_trace(trace_path);
  if (trace.empty()) {
    std::cerr << "trace " << trace_path << " has no records\n";
    return kExitError;
  }
  const auto rep = regacc::verify_hard_constraints(trace, cfg);
  print_report(rep);
  return rep.satisfied() ? kExitOk : kExitViolation;
}

int cmd_validate(const std::string& config, bool candidate) {
  const auto cfg = regacc::load_scenario(config);
  if (cfg.signals.empty()) {
    std::cerr << "scenario has no signals\n";
    return kExitError;
  }
  regacc::CBFValidation v;
  if (candidate) {
    const auto timings = cfg.signal_timings();
    const auto cbf = regacc::build_candidate_cbf(timings, cfg.traffic.default_spacing, {0.0, cfg.horizon});
    v = regacc::validate_cbf(cbf, cfg.vehicle.V_max);
  } else {
    v = regacc::validate_scenario_cbf(cfg);
  }
  std::printf("degree signal boundary t        k0_margin    k1_margin   status\n");
  for (const auto& b : v.boundaries) {
    const auto& m = b.report.worst_margin;
    std::printf("%-6d %-6zu %-8zu %-8.2f %-12.6f", b.degree, b.signal + 1, b.boundary, b.report.boundary_time,
                m[0]);
    if (m.size() > 1) {
      std::printf(" %-11.6f", m[1]);
    } else {
      std::printf(" %-11s", "-");
    }
    std::printf(" %s\n", b.report.valid ? "valid" : "INVALID");
  }
  std::printf("%s\n", v.valid() ? "barrier valid at every boundary" : "barrier INVALID");
  return v.valid() ? kExitOk : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regulated adaptive cruise control simulator"};
  app.require_subcommand(1);

  std::string run_config, run_out, run_mode;
  auto* run = app.add_subcommand("run", "Simulate a scenario");
  run->add_option("config", run_config, "Scenario file or bundled scenario name")->required();
  run->add_option("--out", run_out, "Write the trace CSV here ('-' for stdout)");
  run->add_option("--mode", run_mode, "Override the input mode")
      ->check(CLI::IsMember({"constrained", "unconstrained"}));

  std::string verify_trace, verify_config;
  auto* verify = app.add_subcommand("verify", "Audit a trace against the hard constraints");
  verify->add_option("trace", verify_trace, "Trace CSV")->required()->check(CLI::ExistingFile);
  verify->add_option("config", verify_config, "Scenario the trace was produced from")->required();

  std::string validate_config;
  bool candidate = false;
  auto* validate = app.add_subcommand("validate-cbf", "Check jump validity of the traffic barrier");
  validate->add_option("config", validate_config, "Scenario file or bundled scenario name")->required();
  validate->add_flag("--candidate", candidate, "Check the naive stop-line candidate instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*run) return cmd_run(run_config, run_out, run_mode);
    if (*verify) return cmd_verify(verify_trace, verify_config);
    if (*validate) return cmd_validate(validate_config, candidate);
  } catch (const regacc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitError;
  } catch (const regacc::TraceFormatError& e) {
    std::cerr << "trace error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
