// Command-line harness for tensegrity-based formation shape control:
// certify a shape, run stabilization and reconfiguration experiments, and
// sweep the reconfiguration horizon.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tenseg/tenseg.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBlowUp = 3;

struct CommonFlags {
  std::string scenario_file;
  std::string shape_file, start_file, goal_file;
  std::string nu = "auto";
  std::string tau_list;
  double tau = 3.0;
  double dt = 1e-3;
  double t_end = 500.0;
  double perturbation = 0.05;
  std::uint64_t seed = 0;
  int runs = 50;
  int stride = 100;
  std::string out_dir;
  std::string eigen_d;
  bool optimize_pairing = false;
};

void add_sim_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--scenario", flags.scenario_file, "scenario JSON file (flags override it)");
  cmd->add_option("--nu", flags.nu, "damping coefficient or 'auto'");
  cmd->add_option("--dt", flags.dt, "integration step, s");
  cmd->add_option("--t-end", flags.t_end, "simulated horizon, s");
  cmd->add_option("--perturb", flags.perturbation, "initial perturbation magnitude, m");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--stride", flags.stride, "sample every n-th step");
  cmd->add_option("--out", flags.out_dir, "output directory for metrics/trajectories");
  cmd->add_option("--eigen-d", flags.eigen_d, "comma-separated stress eigenvalues (N-3 values)");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::string item;
  std::istringstream stream(text);
  while (std::getline(stream, item, ',')) {
    if (!item.empty()) values.push_back(std::stod(item));
  }
  return values;
}

double parse_nu(const std::string& text) {
  if (text == "auto") return -1.0;
  try {
    return std::stod(text);
  } catch (const std::exception&) {
    throw tenseg::UsageError("--nu must be a number or 'auto'");
  }
}

tenseg::Scenario make_scenario(const CommonFlags& flags, CLI::App* cmd,
                               tenseg::Scenario::Kind kind) {
  tenseg::Scenario s;
  if (!flags.scenario_file.empty()) {
    const std::filesystem::path path = flags.scenario_file;
    s = tenseg::scenario_from_json(tenseg::json::parse(tenseg::read_text_file(path)),
                                   path.has_parent_path() ? path.parent_path()
                                                          : std::filesystem::path("."));
  }
  s.kind = kind;
  auto set_if = [&](const char* flag, auto setter) {
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    if (opt != nullptr && opt->count() > 0) setter();
  };
  set_if("--shape", [&] { s.shape = tenseg::load_placement(flags.shape_file); });
  set_if("--start", [&] { s.start = tenseg::load_placement(flags.start_file); });
  set_if("--goal", [&] { s.goal = tenseg::load_placement(flags.goal_file); });
  set_if("--nu", [&] { s.nu = parse_nu(flags.nu); });
  if (flags.scenario_file.empty()) s.nu = parse_nu(flags.nu);
  set_if("--dt", [&] { s.dt = flags.dt; });
  set_if("--t-end", [&] { s.t_end = flags.t_end; });
  set_if("--perturb", [&] { s.perturbation = flags.perturbation; });
  set_if("--seed", [&] { s.seed = flags.seed; });
  set_if("--stride", [&] { s.sample_stride = flags.stride; });
  set_if("--out", [&] { s.out_dir = flags.out_dir; });
  set_if("--runs", [&] { s.runs = flags.runs; });
  set_if("--tau", [&] {
    if (kind == tenseg::Scenario::Kind::tau_sweep) {
      s.taus = parse_list(flags.tau_list);
    } else {
      s.tau = flags.tau;
    }
  });
  set_if("--optimize-pairing", [&] { s.optimize_pairing = flags.optimize_pairing; });
  set_if("--eigen-d", [&] {
    const auto values = parse_list(flags.eigen_d);
    s.eigen_d = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<long>(values.size()));
  });
  return s;
}

void print_metrics(const tenseg::RunMetrics& m) {
  std::printf("  simulated           %.1f s (%zu samples)\n", m.sim_time_end, m.t.size());
  std::printf("  total distance      %.4f m\n", m.total_distance);
  std::printf("  peak shape error    %.3e m^2\n", m.peak_error);
  std::printf("  final shape error   %.3e m^2\n", m.final_error);
  if (m.converged) {
    std::printf("  error < 1e-3 from   %.2f s\n", m.convergence_time);
  } else {
    std::printf("  error < 1e-3        not reached\n");
  }
  if (m.decay_fitted) std::printf("  fitted decay rate   %.4f 1/s\n", m.decay_rate);
  std::printf("  orientation drift   %.4f rad\n", m.orientation_drift);
}

int run_certify(const std::string& shape_file, const std::string& nu_text,
                const std::string& eigen_d_text, const std::string& out_dir) {
  const tenseg::Placement shape = tenseg::load_placement(shape_file);
  Eigen::VectorXd d = Eigen::VectorXd::Ones(std::max(shape.size() - 3, 0));
  if (!eigen_d_text.empty()) {
    const auto values = parse_list(eigen_d_text);
    d = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<long>(values.size()));
  }
  const tenseg::StabilityReport report = tenseg::certify_shape(shape, d, parse_nu(nu_text));
  if (report.failed_stage.rfind("form_finding", 0) == 0) {
    std::printf("%s\n", report.failed_stage.c_str());
    std::printf("certificate: FAIL\n");
    if (!out_dir.empty()) {
      tenseg::write_text_file_atomic(std::filesystem::path(out_dir) / "stability_report.json",
                                     tenseg::report_to_json(report).dump(2) + "\n");
    }
    return kExitCheckFailed;
  }
  std::printf("stress kernel        %s (rank %d)\n", report.stress_ok ? "ok" : "FAILED",
              report.stress.rank);
  std::printf("hessian PSD          %s\n", report.hessian_psd ? "ok" : "FAILED");
  std::printf("symmetry kernel      %s (angle %.2e rad)\n", report.kernel_ok ? "ok" : "FAILED",
              report.kernel_match_error);
  std::printf("spectral margin      %s (%.4f at nu=%.4f, bound sqrt(lmax)=%.4f)\n",
              report.margin_ok ? "ok" : "FAILED", report.spectral_margin, report.nu,
              report.damping_bound);
  if (!report.pass) std::printf("failed stage: %s\n", report.failed_stage.c_str());
  std::printf("certificate: %s\n", report.pass ? "PASS" : "FAIL");
  if (!out_dir.empty()) {
    tenseg::write_text_file_atomic(std::filesystem::path(out_dir) / "stability_report.json",
                                   tenseg::report_to_json(report).dump(2) + "\n");
  }
  return report.pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"virtual tensegrity formation control toolkit"};
  app.require_subcommand(1);

  CommonFlags certify_flags, stabilize_flags, reconfigure_flags, sweep_flags;

  CLI::App* certify = app.add_subcommand("certify", "form-find a shape and certify its stability");
  certify->add_option("--shape", certify_flags.shape_file, "shape JSON file")->required();
  certify->add_option("--nu", certify_flags.nu, "damping coefficient or 'auto'");
  certify->add_option("--eigen-d", certify_flags.eigen_d, "comma-separated stress eigenvalues");
  certify->add_option("--out", certify_flags.out_dir, "output directory for the report");

  CLI::App* stabilize = app.add_subcommand("stabilize", "perturb a shape and track its recovery");
  stabilize->add_option("--shape", stabilize_flags.shape_file, "shape JSON file");
  stabilize->add_option("--runs", stabilize_flags.runs, "number of seeded runs (default 1)");
  add_sim_flags(stabilize, stabilize_flags);

  CLI::App* reconfigure =
      app.add_subcommand("reconfigure", "drive a formation from one shape to another");
  reconfigure->add_option("--start", reconfigure_flags.start_file, "start shape JSON file");
  reconfigure->add_option("--goal", reconfigure_flags.goal_file, "goal shape JSON file");
  reconfigure->add_option("--tau", reconfigure_flags.tau, "reconfiguration horizon, s");
  reconfigure->add_flag("--optimize-pairing", reconfigure_flags.optimize_pairing,
                        "search goal rotations and node pairings for the cheapest plan");
  add_sim_flags(reconfigure, reconfigure_flags);

  CLI::App* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep over reconfiguration horizons");
  sweep->add_option("--start", sweep_flags.start_file, "start shape JSON file");
  sweep->add_option("--goal", sweep_flags.goal_file, "goal shape JSON file");
  sweep->add_option("--tau", sweep_flags.tau_list, "comma-separated tau grid, s");
  sweep->add_option("--runs", sweep_flags.runs, "runs per tau value");
  sweep->add_flag("--optimize-pairing", sweep_flags.optimize_pairing,
                  "search goal rotations and node pairings for the cheapest plan");
  add_sim_flags(sweep, sweep_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (certify->parsed()) {
      return run_certify(certify_flags.shape_file, certify_flags.nu, certify_flags.eigen_d,
                         certify_flags.out_dir);
    }
    if (stabilize->parsed()) {
      tenseg::Scenario s =
          make_scenario(stabilize_flags, stabilize, tenseg::Scenario::Kind::stabilize);
      if (stabilize->count("--runs") > 0 && s.runs > 1) {
        int converged = 0, decayed = 0;
        const int runs = s.runs;
        tenseg::Scenario batch = s;
        batch.out_dir.clear();
        for (int r = 0; r < runs; ++r) {
          batch.seed = tenseg::detail::derive_seed(s.seed, static_cast<std::uint64_t>(r));
          const tenseg::RunMetrics m = tenseg::run_stabilize(batch);
          if (m.converged) ++converged;
          if (m.decay_fitted && m.decay_rate < 0.0) ++decayed;
        }
        std::printf("stabilize batch: %d/%d converged, %d with negative fitted decay\n",
                    converged, runs, decayed);
        return kExitOk;
      }
      const tenseg::RunMetrics m = tenseg::run_stabilize(s);
      std::printf("stabilize: %s\n", m.converged ? "converged" : "did not converge");
      print_metrics(m);
      return kExitOk;
    }
    if (reconfigure->parsed()) {
      const tenseg::Scenario s =
          make_scenario(reconfigure_flags, reconfigure, tenseg::Scenario::Kind::reconfigure);
      const tenseg::RunMetrics m = tenseg::run_reconfigure(s);
      std::printf("reconfigure (tau = %.3g s): %s\n", s.tau,
                  m.converged ? "converged" : "did not converge");
      print_metrics(m);
      const tenseg::ReconfigPlan plan =
          s.optimize_pairing
              ? tenseg::plan_reconfiguration(tenseg::ShapeClass(s.start),
                                             tenseg::ShapeClass(s.goal), s.tau)
              : tenseg::direct_plan(s.start, s.goal, s.tau);
      std::printf("  planned cost        %.4f m\n", plan.pairing().cost);
      for (const auto& ev : tenseg::schedule_edge_events(plan, 200)) {
        const char* kind = ev.kind == tenseg::EdgeEvent::Kind::appeared
                               ? "appears"
                               : ev.kind == tenseg::EdgeEvent::Kind::disappeared ? "disappears"
                                                                                 : "changes kind";
        std::printf("  edge (%d,%d) %s near t = %.2f s\n", ev.i + 1, ev.j + 1, kind, ev.t);
      }
      return kExitOk;
    }
    if (sweep->parsed()) {
      tenseg::Scenario s = make_scenario(sweep_flags, sweep, tenseg::Scenario::Kind::tau_sweep);
      if (s.taus.empty() && sweep->count("--tau") == 0) {
        throw tenseg::UsageError("sweep needs --tau with at least one value");
      }
      const auto rows = tenseg::run_tau_sweep(s);
      std::printf("%8s %6s %6s %14s %12s %14s\n", "tau", "runs", "fail", "mean dist [m]",
                  "sd [m]", "mean conv [s]");
      for (const auto& row : rows) {
        std::printf("%8.3g %6d %6d %14.4f %12.4f %14.2f\n", row.tau, row.completed, row.failed,
                    row.mean_total_distance, row.sd_total_distance, row.mean_convergence_time);
      }
      return kExitOk;
    }
  } catch (const tenseg::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const tenseg::BlowUpError& e) {
    std::fprintf(stderr, "numerical blow-up: %s\n", e.what());
    return kExitBlowUp;
  } catch (const tenseg::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
