// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
// Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tenseg/tenseg.hpp"

using namespace tenseg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

int failures = 0;

void report(int index, const char* name, bool pass, const std::string& details) {
  std::printf("[%s] C%d %s: %s\n", pass ? "PASS" : "FAIL", index, name, details.c_str());
  if (!pass) ++failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// --- C1 ---------------------------------------------------------------
void stress_reproduction() {
  Timer timer;
  VectorXd d(2);
  d << 1, 1;
  const StressMatrix omega = synthesize_stress(fixtures::fivenode(), d);
  const double diff = (omega - fixtures::fivenode_stress_dense()).cwiseAbs().maxCoeff();
  const double elapsed = timer.seconds();
  const bool entries = std::abs(omega(0, 0) - 11.0 / 18) < 1e-9 &&
                       std::abs(omega(2, 3) + 17.0 / 63) < 1e-9;
  report(1, "stress-matrix reproduction", diff < 1e-9 && entries && elapsed < 1.0,
         fmt("max entry diff %.2e, %.3f s", diff, elapsed));
}

// --- C2 ---------------------------------------------------------------
void reference_matrix_validation() {
  const Placement shape = fixtures::fivenode();
  const auto dense = validate_stress(fixtures::fivenode_stress_dense(), shape);
  const auto sparse = validate_stress(fixtures::fivenode_stress_sparse(), shape);
  const size_t dense_edges =
      extract_edges(fixtures::fivenode_stress_dense(), default_zero_tol(fixtures::fivenode_stress_dense())).size();
  const size_t sparse_edges =
      extract_edges(fixtures::fivenode_stress_sparse(), default_zero_tol(fixtures::fivenode_stress_sparse())).size();
  const double worst_residual =
      std::max({dense.x_residual, dense.y_residual, dense.ones_residual, sparse.x_residual,
                sparse.y_residual, sparse.ones_residual});
  const bool pass = dense.pass && sparse.pass && dense.rank == 2 && sparse.rank == 2 &&
                    worst_residual < 1e-9 && dense_edges == 9 && sparse_edges == 8;
  report(2, "reference matrices validate", pass,
         fmt("residuals <= %.2e, ranks %d/%d, edges %zu/%zu", worst_residual, dense.rank,
             sparse.rank, dense_edges, sparse_edges));
}

// --- C3 ---------------------------------------------------------------
void parameter_identity() {
  std::mt19937_64 rng(303);
  std::vector<TensegrityModel> models;
  models.push_back(build_model(fixtures::fivenode()));
  std::uniform_int_distribution<int> size(4, 8);
  while (models.size() < 21) {
    const Placement p = oracles::random_placement(rng, size(rng));
    const StressMatrix omega = synthesize_stress(p, VectorXd::Ones(p.size() - 3));
    double smallest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p.size(); ++i) {
      for (int j = i + 1; j < p.size(); ++j) smallest = std::min(smallest, std::abs(omega(i, j)));
    }
    if (smallest < 1e-3 * omega.cwiseAbs().maxCoeff()) continue;  // keep the identity sharp
    models.push_back(build_model(p));
  }
  const ReconfigPlan plan = direct_plan(fixtures::reconfig_start(), fixtures::reconfig_goal(), 3.0);
  for (double t : {0.0, 0.6, 1.5, 2.4, 3.0}) models.push_back(schedule_at(plan, t));

  double worst_identity = 0.0;
  bool signs_ok = true;
  int edges_checked = 0;
  for (const auto& model : models) {
    const MatrixXd r = pairwise_distances(model.equilibrium);
    for (const Edge& e : model.edges) {
      ++edges_checked;
      worst_identity = std::max(worst_identity,
                                std::abs(e.alpha * (1.0 - e.rest_length / r(e.i, e.j)) - 1.0));
      signs_ok = signs_ok && std::signbit(e.alpha) == std::signbit(e.omega) && e.alpha * e.omega > 0;
    }
  }
  report(3, "spring parameter identity", worst_identity < 1e-12 && signs_ok,
         fmt("%d edges over %zu models, worst |alpha(1-l/r)-1| = %.2e", edges_checked,
             models.size(), worst_identity));
}

// --- C4 ---------------------------------------------------------------
void equilibrium_and_scale() {
  const TensegrityModel model = build_model(fixtures::fivenode());
  const double at_eq = static_force_residual(model, model.equilibrium);
  const double scaled_up = static_force_residual(model, scaled(model.equilibrium, 1.2));
  const Placement stretched =
      Placement::from_xy(2.0 * fixtures::fivenode().x(), 3.0 * fixtures::fivenode().y());
  const SimDerivative lin =
      linear_eom_rhs(SimState::at_rest(stretched), fixtures::fivenode_stress_dense(), DampingSpec{0.0});
  double lin_residual = 0.0;
  for (const Vec2& f : lin.p_dot) lin_residual = std::max(lin_residual, f.norm());
  report(4, "equilibrium and scale pinning",
         at_eq < 1e-9 && scaled_up > 1e-3 && lin_residual < 1e-12,
         fmt("residual %.2e at shape, %.2e at 1.2x, linear model %.2e at (2x,3y)", at_eq,
             scaled_up, lin_residual));
}

// --- C5 ---------------------------------------------------------------
void hessian_certification() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> size(4, 8);
  double worst_fd = 0.0, worst_angle = 0.0;
  bool kernel_ok = true;
  for (int rep = 0; rep < 50; ++rep) {
    const TensegrityModel model = build_model(oracles::random_placement(rng, size(rng)));
    auto potential = [&](const VectorXd& q) {
      return augmented_potential(model, Placement::from_stacked(q));
    };
    const MatrixXd analytic = second_variation(model);
    const MatrixXd fd = oracles::fd_hessian(potential, model.equilibrium.stacked(), 1e-3);
    worst_fd = std::max(worst_fd, (analytic - fd).cwiseAbs().maxCoeff() /
                                      std::max(1.0, analytic.cwiseAbs().maxCoeff()));
    const KernelCheck check = check_kernel(analytic, model.equilibrium);
    kernel_ok = kernel_ok && check.zero_count == 3 && check.angle < 1e-6;
    worst_angle = std::max(worst_angle, check.angle);
  }

  const TensegrityModel model = build_model(fixtures::fivenode());
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst_form = 0.0;
  bool nonneg = true;
  for (int rep = 0; rep < 1000; ++rep) {
    VectorXd qx(5), qy(5);
    for (int k = 0; k < 5; ++k) {
      qx(k) = gauss(rng);
      qy(k) = gauss(rng);
    }
    const double factored = rest_length_curvature_factored(model, qx, qy);
    const double block = rest_length_curvature_quadratic(model, qx, qy);
    worst_form = std::max(worst_form, std::abs(factored - block) / std::max(1.0, std::abs(block)));
    nonneg = nonneg && factored >= -1e-12;
  }
  report(5, "Hessian certification", worst_fd < 1e-5 && kernel_ok && worst_form < 1e-10 && nonneg,
         fmt("FD mismatch %.2e, kernel angle %.2e, form mismatch %.2e over 1000 directions",
             worst_fd, worst_angle, worst_form));
}

// --- C6 ---------------------------------------------------------------
void linearization() {
  Timer timer;
  const TensegrityModel model = build_model(fixtures::fivenode());
  const MatrixXd hess = second_variation(model);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(hess);
  const double lambda_max = es.eigenvalues().maxCoeff();

  const MatrixXd jac = jacobian(model, DampingSpec{recommended_damping(hess)});
  const auto evals = jacobian_spectrum(jac);
  const double tol = 1e-7 * std::abs(evals.back());
  int zeros = 0;
  bool others_decay = true;
  for (size_t k = 0; k < evals.size(); ++k) {
    if (std::abs(evals[k]) < tol) {
      ++zeros;
    } else {
      others_decay = others_decay && evals[k].real() < 0.0;
    }
  }

  const double jac_scale = std::max(1.0, jac.cwiseAbs().maxCoeff());
  bool kernel_vectors_ok = true;
  for (int which = 0; which < 3; ++which) {
    VectorXd v = VectorXd::Zero(20);
    if (which == 0) v.head(5).setOnes();
    if (which == 1) v.segment(5, 5).setOnes();
    if (which == 2) {
      v.head(5) = -model.equilibrium.y();
      v.segment(5, 5) = model.equilibrium.x();
    }
    kernel_vectors_ok = kernel_vectors_ok && (jac * v).cwiseAbs().maxCoeff() < 1e-9 * jac_scale;
  }

  // overdamped regime: pick a damping above the bound that makes every
  // nonzero eigenvalue real
  const auto over = jacobian_spectrum(jacobian(model, DampingSpec{2.1 * std::sqrt(lambda_max)}));
  bool all_real_negative = true;
  for (size_t k = 3; k < over.size(); ++k) {
    all_real_negative = all_real_negative && std::abs(over[k].imag()) < tol && over[k].real() < 0.0;
  }
  const double elapsed = timer.seconds();
  report(6, "linearization spectrum", zeros == 3 && others_decay && kernel_vectors_ok &&
                                          all_real_negative && elapsed < 10.0,
         fmt("3 symmetry zeros, rest decaying, overdamped spectrum real, %.2f s", elapsed));
}

// --- C7 ---------------------------------------------------------------
void stabilization_runs() {
  Timer timer;
  int reached = 0;
  bool decays_negative = true;
  for (int run = 0; run < 100; ++run) {
    Scenario s;
    s.kind = Scenario::Kind::stabilize;
    s.shape = fixtures::fivenode();
    s.perturbation = 0.05;
    s.seed = detail::derive_seed(2027, static_cast<std::uint64_t>(run));
    const RunMetrics m = run_stabilize(s);
    bool hit = false;
    for (size_t k = 0; k < m.e.size(); ++k) {
      if (m.e[k] < 1e-6 && m.t[k] <= 500.0) {
        hit = true;
        break;
      }
    }
    if (hit) {
      ++reached;
      decays_negative = decays_negative && m.decay_fitted && m.decay_rate < 0.0;
    }
  }
  report(7, "stabilization Monte-Carlo", reached >= 95 && decays_negative,
         fmt("%d/100 runs below 1e-6 m^2, decay rates all negative: %s, %.1f s", reached,
             decays_negative ? "yes" : "no", timer.seconds()));
}

// --- C8 ---------------------------------------------------------------
void pairing() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> size(3, 8);
  bool assignment_ok = true;
  int crossings = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = size(rng);
    const Placement q0 = oracles::random_placement(rng, n, 2.0, 0.1);
    const Placement qf = oracles::random_placement(rng, n, 2.0, 0.1);
    const Pairing p = optimal_pairing(q0, qf);
    const double brute = oracles::brute_force_pairing_cost(q0, qf);
    assignment_ok =
        assignment_ok && std::abs(p.cost - brute) <= 1e-12 * std::max(1.0, brute);
    crossings += static_cast<int>(crossing_check(q0, qf, p.perm).size());
  }
  const double direct_cost = fixtures::reconfig_direct_cost();
  const bool cost_ok = direct_cost > 8.7 - 0.05 && direct_cost < 8.7 + 0.05;
  report(8, "pairing optimality", assignment_ok && crossings == 0 && cost_ok,
         fmt("200 instances match exhaustive search, %d crossings, planned cost %.4f m",
             crossings, direct_cost));
}

// --- C9 ---------------------------------------------------------------
void reconfiguration_tracking() {
  Timer timer;
  Scenario single;
  single.kind = Scenario::Kind::reconfigure;
  single.start = fixtures::reconfig_start();
  single.goal = fixtures::reconfig_goal();
  single.tau = 3.0;
  single.seed = 99;
  const RunMetrics m = run_reconfigure(single);
  const bool tracks = m.converged && m.convergence_time < 500.0 && m.final_error < 1e-3;

  Scenario sweep = single;
  sweep.kind = Scenario::Kind::tau_sweep;
  sweep.taus = {0.1, 1.0, 3.0, 10.0};
  sweep.runs = 50;
  sweep.seed = 424242;
  const auto rows = run_tau_sweep(sweep);
  bool monotone = true, bounded = true, all_completed = true;
  for (size_t k = 0; k < rows.size(); ++k) {
    bounded = bounded && rows[k].mean_total_distance >= 8.65;
    all_completed = all_completed && rows[k].failed == 0;
    if (k > 0) {
      monotone = monotone && rows[k].mean_total_distance <= 1.02 * rows[k - 1].mean_total_distance;
    }
  }
  const double elapsed = timer.seconds();
  report(9, "reconfiguration tracking and tau sweep",
         tracks && monotone && bounded && all_completed && elapsed < 600.0,
         fmt("tau=3 error %.1e m^2 at %.0f s; means %.3f/%.3f/%.3f/%.3f m; %.0f s total",
             m.final_error, m.convergence_time, rows[0].mean_total_distance,
             rows[1].mean_total_distance, rows[2].mean_total_distance,
             rows[3].mean_total_distance, elapsed));
}

// --- C10 --------------------------------------------------------------
void schedule_equilibrium_family() {
  const ReconfigPlan plan3 = direct_plan(fixtures::reconfig_start(), fixtures::reconfig_goal(), 3.0);
  double worst = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = 3.0 * k / 100.0;
    worst = std::max(worst, static_force_residual(schedule_at(plan3, t), interpolate(plan3, t)));
  }
  const double d3 = slow_variation_diagnostic(plan3, 0.05, 1500);
  const double d6 = slow_variation_diagnostic(
      direct_plan(fixtures::reconfig_start(), fixtures::reconfig_goal(), 6.0), 0.05, 1500);
  const double ratio = d6 / d3;
  report(10, "schedule equilibrium family", worst < 1e-9 && ratio > 0.475 && ratio < 0.525,
         fmt("max residual %.2e over 100 samples, doubling ratio %.4f", worst, ratio));
}

}  // namespace

int main() {
  stress_reproduction();
  reference_matrix_validation();
  parameter_identity();
  equilibrium_and_scale();
  hessian_certification();
  linearization();
  stabilization_runs();
  pairing();
  reconfiguration_tracking();
  schedule_equilibrium_family();
  std::printf("%s: %d/10 criteria passed\n", failures == 0 ? "ACCEPTED" : "REJECTED",
              10 - failures);
  return failures == 0 ? 0 : 1;
}
