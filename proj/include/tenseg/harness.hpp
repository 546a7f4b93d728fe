#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tenseg/dynamics.hpp"
#include "tenseg/errors.hpp"
#include "tenseg/form_finding.hpp"
#include "tenseg/geometry.hpp"
#include "tenseg/io.hpp"
#include "tenseg/reconfiguration.hpp"
#include "tenseg/stability.hpp"

namespace tenseg {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-run seed derived from a master seed and stream indices; reproducible
/// regardless of execution order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(master ^ (a * 0xd1342543de82ef95ULL)) ^ b);
}

/// Uniform double in [-mag, mag], built from raw bits so runs are
/// reproducible across standard libraries.
inline double uniform_pm(std::mt19937_64& rng, double mag) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
  return mag * (2.0 * unit - 1.0);
}

template <class F>
void parallel_for(int count, F&& body) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(count));
  if (workers <= 1) {
    for (int k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int k = next.fetch_add(1); k < count; k = next.fetch_add(1)) {
        try {
          body(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// One experiment description, loadable from JSON and overridable from the
/// command line.
struct Scenario {
  enum class Kind { stabilize, reconfigure, tau_sweep };

  Kind kind = Kind::stabilize;
  Placement shape;                 // stabilize
  Placement start, goal;           // reconfigure / sweep
  Eigen::VectorXd eigen_d;         // empty -> all ones
  double nu = -1.0;                // < 0 means "auto" (recommended damping)
  double dt = 1e-3;                // s
  double t_end = 500.0;            // s
  double perturbation = 0.05;      // m, uniform per-coordinate offset
  std::uint64_t seed = 0;
  double tau = 3.0;                // s, single reconfiguration
  std::vector<double> taus;        // sweep grid
  int runs = 1;
  int sample_stride = 100;
  std::string out_dir;             // empty -> no files written
  // When false (default) the goal file's ordering and orientation define the
  // pairing, node i travelling to goal node i. When true the planner searches
  // over goal rotations and node pairings for the cheapest plan.
  bool optimize_pairing = false;

  void validate() const {
    if (!(dt > 0.0)) throw UsageError("dt must be positive");
    if (!(t_end > 0.0)) throw UsageError("t_end must be positive");
    if (perturbation < 0.0) throw UsageError("perturbation must be nonnegative");
    if (sample_stride < 1) throw UsageError("sample stride must be >= 1");
    if (kind == Kind::stabilize && shape.size() == 0) throw UsageError("missing shape");
    if (kind != Kind::stabilize && (start.size() == 0 || goal.size() == 0)) {
      throw UsageError("missing start/goal shapes");
    }
    if (kind == Kind::reconfigure && !(tau > 0.0)) throw UsageError("tau must be positive");
    if (kind == Kind::tau_sweep) {
      if (taus.empty()) throw UsageError("tau list must not be empty");
      for (double t : taus) {
        if (!(t > 0.0)) throw UsageError("tau values must be positive");
      }
      if (runs < 1) throw UsageError("need at least one run");
    }
  }
};

inline Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
  Scenario s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "stabilize") {
    s.kind = Scenario::Kind::stabilize;
  } else if (kind == "reconfigure") {
    s.kind = Scenario::Kind::reconfigure;
  } else if (kind == "tau_sweep") {
    s.kind = Scenario::Kind::tau_sweep;
  } else {
    throw UsageError("unknown scenario kind: " + kind);
  }
  auto load_ref = [&](const std::string& key) {
    const std::filesystem::path p = j.at(key).get<std::string>();
    return load_placement(p.is_absolute() ? p : base_dir / p);
  };
  if (j.contains("shape")) s.shape = load_ref("shape");
  if (j.contains("start")) s.start = load_ref("start");
  if (j.contains("goal")) s.goal = load_ref("goal");
  if (j.contains("eigen_d")) {
    const auto d = j["eigen_d"].get<std::vector<double>>();
    s.eigen_d = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<long>(d.size()));
  }
  if (j.contains("nu")) {
    if (j["nu"].is_string()) {
      if (j["nu"].get<std::string>() != "auto") throw UsageError("nu must be a number or \"auto\"");
      s.nu = -1.0;
    } else {
      s.nu = j["nu"].get<double>();
    }
  }
  if (j.contains("dt")) s.dt = j["dt"].get<double>();
  if (j.contains("t_end")) s.t_end = j["t_end"].get<double>();
  if (j.contains("perturbation")) s.perturbation = j["perturbation"].get<double>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("tau")) s.tau = j["tau"].get<double>();
  if (j.contains("taus")) s.taus = j["taus"].get<std::vector<double>>();
  if (j.contains("runs")) s.runs = j["runs"].get<int>();
  if (j.contains("sample_stride")) s.sample_stride = j["sample_stride"].get<int>();
  if (j.contains("out_dir")) s.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("optimize_pairing")) s.optimize_pairing = j["optimize_pairing"].get<bool>();
  return s;
}

/// Per-run outcome: the sampled shape-error series plus scalar summaries.
struct RunMetrics {
  std::vector<double> t;               // sample times, s
  std::vector<double> e;               // shape error at the samples, m^2
  std::vector<double> node_distance;   // path length per node, m
  double total_distance = 0.0;         // summed over nodes, m
  double orientation_drift = 0.0;      // final rotation relative to the reference, rad
  double convergence_time = std::numeric_limits<double>::quiet_NaN();  // e permanently < 1e-3
  bool converged = false;
  double peak_error = 0.0;
  double final_error = 0.0;
  double decay_rate = std::numeric_limits<double>::quiet_NaN();  // slope of log sqrt(e) tail
  bool decay_fitted = false;
  double sim_time_end = 0.0;  // s actually simulated (early stop allowed)
};

inline constexpr double kConvergenceThreshold = 1e-3;  // m^2

namespace detail {

/// First sample time after which the series stays below the threshold.
inline std::optional<double> permanent_below(const std::vector<double>& t,
                                             const std::vector<double>& e, double threshold) {
  std::optional<double> since;
  for (size_t k = 0; k < e.size(); ++k) {
    if (e[k] < threshold) {
      if (!since) since = t[k];
    } else {
      since.reset();
    }
  }
  return since;
}

inline void fit_decay(RunMetrics& m) {
  if (m.e.empty()) return;
  const size_t peak = static_cast<size_t>(
      std::distance(m.e.begin(), std::max_element(m.e.begin(), m.e.end())));
  std::vector<double> ts, ys;
  for (size_t k = peak; k < m.e.size(); ++k) {
    if (m.e[k] > 1e-26) {
      ts.push_back(m.t[k]);
      ys.push_back(0.5 * std::log(m.e[k]));
    }
  }
  if (ts.size() < 5 || ts.back() - ts.front() <= 0.0) return;
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  for (size_t k = 0; k < ts.size(); ++k) {
    st += ts[k];
    sy += ys[k];
    stt += ts[k] * ts[k];
    sty += ts[k] * ys[k];
  }
  const double nn = static_cast<double>(ts.size());
  const double denom = nn * stt - st * st;
  if (denom <= 0.0) return;
  m.decay_rate = (nn * sty - st * sy) / denom;
  m.decay_fitted = true;
}

/// Shared trajectory post-processing for both run kinds. `reference_at(t)`
/// supplies the planned placement the shape error is measured against.
template <class ModelAt, class ReferenceAt>
RunMetrics run_and_measure(const SimState& initial, ModelAt&& model_at, double nu,
                           const SimOptions& opts, ReferenceAt&& reference_at,
                           const Placement& final_reference, double min_stop_time,
                           Trajectory& traj_store) {
  const int n = initial.placement.size();
  RunMetrics metrics;
  metrics.node_distance.assign(static_cast<size_t>(n), 0.0);

  int consecutive_quiet = 0;
  auto observer = [&](double t, const Eigen::VectorXd& zprev, const Eigen::VectorXd& z) {
    for (int i = 0; i < n; ++i) {
      const double dx = z(i) - zprev(i);
      const double dy = z(n + i) - zprev(n + i);
      metrics.node_distance[static_cast<size_t>(i)] += std::sqrt(dx * dx + dy * dy);
    }
    // Early stop once the shape error and the speeds are far below every
    // reported threshold; the remaining path length is negligible.
    if (t >= min_stop_time) {
      const double speed_sq = z.tail(2 * n).squaredNorm();
      if (speed_sq < 1e-14) {
        const double err = shape_error(Placement::from_stacked(z.head(2 * n)), reference_at(t));
        if (err < 1e-12) {
          if (++consecutive_quiet >= 3) return false;
          return true;
        }
      }
      consecutive_quiet = 0;
    }
    return true;
  };

  traj_store = simulate(initial, model_at, DampingSpec{nu}, opts, observer);
  const Trajectory& traj = traj_store;

  metrics.t = traj.times;
  metrics.e.resize(traj.times.size());
  for (size_t k = 0; k < traj.times.size(); ++k) {
    const Placement current = Placement::from_stacked(traj.states[k].head(2 * n));
    metrics.e[k] = shape_error(current, reference_at(traj.times[k]));
  }
  metrics.total_distance = 0.0;
  for (double d : metrics.node_distance) metrics.total_distance += d;
  metrics.peak_error = *std::max_element(metrics.e.begin(), metrics.e.end());
  metrics.final_error = metrics.e.back();
  metrics.sim_time_end = traj.final_time();

  const auto conv = permanent_below(metrics.t, metrics.e, kConvergenceThreshold);
  metrics.converged = conv.has_value();
  if (conv) metrics.convergence_time = *conv;
  fit_decay(metrics);

  const Placement final_placement =
      Placement::from_stacked(traj.states.back().head(2 * n));
  metrics.orientation_drift = se2_align(final_reference, final_placement).motion.rotation;
  return metrics;
}

inline void write_run_outputs(const Scenario& scenario, const std::string& name,
                              const RunMetrics& metrics, const Trajectory* traj) {
  if (scenario.out_dir.empty()) return;
  const std::filesystem::path dir = scenario.out_dir;
  json j{{"total_distance", metrics.total_distance},
         {"node_distance", metrics.node_distance},
         {"orientation_drift", metrics.orientation_drift},
         {"converged", metrics.converged},
         {"convergence_time", metrics.convergence_time},
         {"peak_error", metrics.peak_error},
         {"final_error", metrics.final_error},
         {"decay_rate", metrics.decay_rate},
         {"decay_fitted", metrics.decay_fitted},
         {"sim_time_end", metrics.sim_time_end}};
  write_text_file_atomic(dir / (name + "_metrics.json"), j.dump(2) + "\n");
  std::ostringstream e_csv;
  e_csv << "t,e\n";
  for (size_t k = 0; k < metrics.t.size(); ++k) {
    e_csv << format_double(metrics.t[k]) << "," << format_double(metrics.e[k]) << "\n";
  }
  write_text_file_atomic(dir / (name + "_shape_error.csv"), e_csv.str());
  if (traj != nullptr) {
    write_text_file_atomic(dir / (name + "_trajectory.csv"), trajectory_to_csv(*traj));
  }
}

inline Eigen::VectorXd effective_d(const Scenario& s, int n) {
  if (s.eigen_d.size() == 0) return Eigen::VectorXd::Ones(n - 3);
  if (s.eigen_d.size() != n - 3) throw UsageError("eigen_d must have N-3 entries");
  return s.eigen_d;
}

inline void check_time_step(double dt, double lambda_max) {
  // Fixed-step stability heuristic for the undamped stiffness.
  if (lambda_max > 0.0 && dt >= 0.1 / std::sqrt(lambda_max)) {
    throw UsageError("dt too large for this stiffness; need dt < " +
                     std::to_string(0.1 / std::sqrt(lambda_max)));
  }
}

inline SimState perturbed_rest_state(const Placement& shape, double magnitude,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vec2> nodes = shape.nodes();
  for (Vec2& q : nodes) {
    q.x() += uniform_pm(rng, magnitude);
    q.y() += uniform_pm(rng, magnitude);
  }
  return SimState::at_rest(Placement(std::move(nodes)));
}

}  // namespace detail

/// Perturbs the equilibrium, simulates the stabilizing dynamics, and reports
/// the shape-error metrics. `initial_override` replaces the seeded random
/// perturbation when provided.
inline RunMetrics run_stabilize(const Scenario& scenario,
                                const std::optional<SimState>& initial_override = std::nullopt,
                                Trajectory* traj_out = nullptr) {
  scenario.validate();
  const TensegrityModel model = build_model(scenario.shape, detail::effective_d(scenario, scenario.shape.size()));
  const Eigen::MatrixXd hessian = second_variation(model);
  const double nu = scenario.nu >= 0.0 ? scenario.nu : recommended_damping(hessian);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian);
  detail::check_time_step(scenario.dt, es.eigenvalues().maxCoeff());

  const SimState initial = initial_override.has_value()
                               ? *initial_override
                               : detail::perturbed_rest_state(model.equilibrium,
                                                              scenario.perturbation, scenario.seed);
  SimOptions opts{scenario.dt, scenario.t_end, scenario.sample_stride};
  const Placement& reference = model.equilibrium;
  Trajectory traj;
  RunMetrics metrics = detail::run_and_measure(
      initial, [&model](double) -> const TensegrityModel& { return model; }, nu, opts,
      [&reference](double) -> const Placement& { return reference; }, reference, 0.0, traj);
  detail::write_run_outputs(scenario, "stabilize", metrics, &traj);
  if (traj_out != nullptr) *traj_out = std::move(traj);
  return metrics;
}

/// Plans start -> goal, simulates the scheduled dynamics from the (optionally
/// perturbed) start, and reports metrics against the planned path.
inline RunMetrics run_reconfigure(const Scenario& scenario, double tau_override = -1.0,
                                  std::uint64_t seed_override = 0, bool use_seed_override = false,
                                  Trajectory* traj_out = nullptr) {
  scenario.validate();
  const double tau = tau_override > 0.0 ? tau_override : scenario.tau;
  const Eigen::VectorXd d = detail::effective_d(scenario, scenario.start.size());
  const ReconfigPlan plan =
      scenario.optimize_pairing
          ? plan_reconfiguration(ShapeClass(scenario.start), ShapeClass(scenario.goal), tau, d)
          : direct_plan(scenario.start, scenario.goal, tau, d);

  // Damping and time-step guard from the stiffest sampled waypoint.
  double lambda_max = 0.0;
  for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const Eigen::MatrixXd h = second_variation(schedule_at(plan, f * tau));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    lambda_max = std::max(lambda_max, es.eigenvalues().maxCoeff());
  }
  const double nu = scenario.nu >= 0.0 ? scenario.nu : 1.1 * std::sqrt(lambda_max);
  detail::check_time_step(scenario.dt, lambda_max);

  const std::uint64_t seed = use_seed_override ? seed_override : scenario.seed;
  const SimState initial = detail::perturbed_rest_state(plan.q0(), scenario.perturbation, seed);
  SimOptions opts{scenario.dt, scenario.t_end, scenario.sample_stride};
  ScheduleProvider provider(plan);
  Trajectory traj;
  RunMetrics metrics = detail::run_and_measure(
      initial, [&provider](double t) -> const TensegrityModel& { return provider(t); }, nu, opts,
      [&plan](double t) { return interpolate(plan, t); }, plan.qf(), tau, traj);
  detail::write_run_outputs(scenario, "reconfigure", metrics, &traj);
  if (traj_out != nullptr) *traj_out = std::move(traj);
  return metrics;
}

struct SweepRow {
  double tau = 0.0;
  int completed = 0;
  int failed = 0;
  double mean_total_distance = 0.0;
  double sd_total_distance = 0.0;
  double mean_convergence_time = 0.0;  // over converged runs
  int converged = 0;
};

/// Monte-Carlo sweep over the tau grid: `runs` seeded perturbed
/// reconfigurations per value. Failures (blow-ups) are counted and excluded
/// from the means. Runs execute in parallel; results are deterministic for a
/// fixed master seed.
inline std::vector<SweepRow> run_tau_sweep(const Scenario& scenario) {
  scenario.validate();
  std::vector<SweepRow> rows(scenario.taus.size());
  for (size_t ti = 0; ti < scenario.taus.size(); ++ti) {
    const double tau = scenario.taus[ti];
    std::vector<std::optional<RunMetrics>> results(static_cast<size_t>(scenario.runs));
    Scenario run_scenario = scenario;
    run_scenario.out_dir.clear();  // per-run files are not written during sweeps
    detail::parallel_for(scenario.runs, [&](int r) {
      const std::uint64_t seed = detail::derive_seed(scenario.seed, ti, static_cast<std::uint64_t>(r));
      try {
        results[static_cast<size_t>(r)] = run_reconfigure(run_scenario, tau, seed, true);
      } catch (const BlowUpError&) {
        results[static_cast<size_t>(r)].reset();
      } catch (const CoincidenceError&) {
        results[static_cast<size_t>(r)].reset();
      }
    });
    SweepRow row;
    row.tau = tau;
    double sum = 0.0, sum_sq = 0.0, conv_sum = 0.0;
    for (const auto& res : results) {
      if (!res) {
        ++row.failed;
        continue;
      }
      ++row.completed;
      sum += res->total_distance;
      sum_sq += res->total_distance * res->total_distance;
      if (res->converged) {
        ++row.converged;
        conv_sum += res->convergence_time;
      }
    }
    if (row.completed > 0) {
      row.mean_total_distance = sum / row.completed;
      const double var = sum_sq / row.completed - row.mean_total_distance * row.mean_total_distance;
      row.sd_total_distance = std::sqrt(std::max(0.0, var));
    }
    if (row.converged > 0) row.mean_convergence_time = conv_sum / row.converged;
    rows[ti] = row;
  }
  if (!scenario.out_dir.empty()) {
    std::ostringstream csv;
    csv << "tau,runs,failed,mean_total_distance,sd_total_distance,mean_convergence_time,converged\n";
    for (const SweepRow& row : rows) {
      csv << format_double(row.tau) << "," << row.completed << "," << row.failed << ","
          << format_double(row.mean_total_distance) << "," << format_double(row.sd_total_distance)
          << "," << format_double(row.mean_convergence_time) << "," << row.converged << "\n";
    }
    write_text_file_atomic(std::filesystem::path(scenario.out_dir) / "tau_sweep.csv", csv.str());
  }
  return rows;
}

/// End-to-end certificate: form finding, stress validation, Hessian checks,
/// and the linearization margin. Failures are recorded per stage; the report
/// never throws for a check failure (only for unusable input).
inline StabilityReport certify_shape(const Placement& shape, const Eigen::VectorXd& d, double nu) {
  StabilityReport report;
  TensegrityModel model;
  try {
    model = build_model(shape, d);
  } catch (const Error& e) {
    report.failed_stage = std::string("form_finding: ") + e.what();
    return report;
  } catch (const std::invalid_argument& e) {
    report.failed_stage = std::string("form_finding: ") + e.what();
    return report;
  }
  report.stress = validate_stress(model.stress, shape);
  report.stress_ok = report.stress.pass;

  const Eigen::MatrixXd hessian = second_variation(model);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian);
  report.hessian_spectrum = es.eigenvalues();
  const double h_scale = std::max(1.0, report.hessian_spectrum.cwiseAbs().maxCoeff());
  report.hessian_psd = report.hessian_spectrum(0) > -1e-9 * h_scale;
  report.damping_bound = std::sqrt(std::max(0.0, report.hessian_spectrum(2 * shape.size() - 1)));

  const KernelCheck kernel = check_kernel(hessian, shape);
  report.kernel_zero_count = kernel.zero_count;
  report.kernel_match_error = kernel.angle;
  report.kernel_basis = kernel.kernel;
  report.kernel_ok = kernel.pass;

  report.nu = nu >= 0.0 ? nu : recommended_damping(hessian);
  const Eigen::MatrixXd jac = jacobian(model, DampingSpec{report.nu});
  report.jacobian_eigenvalues = jacobian_spectrum(jac);
  try {
    report.spectral_margin = spectral_margin(jac);
    report.margin_ok = report.spectral_margin > 0.0;
  } catch (const SpectralError& e) {
    report.margin_ok = false;
    report.failed_stage = std::string("spectral_margin: ") + e.what();
  }

  report.pass = report.stress_ok && report.hessian_psd && report.kernel_ok && report.margin_ok;
  if (!report.pass && report.failed_stage.empty()) {
    if (!report.stress_ok) {
      report.failed_stage = "validate_stress";
    } else if (!report.hessian_psd) {
      report.failed_stage = "hessian_psd";
    } else if (!report.kernel_ok) {
      report.failed_stage = "kernel_check";
    } else {
      report.failed_stage = "spectral_margin";
    }
  }
  return report;
}

}  // namespace tenseg
