#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <utility>
#include <vector>

#include "tenseg/errors.hpp"
#include "tenseg/form_finding.hpp"
#include "tenseg/geometry.hpp"

namespace tenseg {

// Minimum separation of connected nodes; the augmented force law divides by
// the distance, so closer pairs abort the run instead of silently clamping.
inline constexpr double kMinSeparation = 1e-9;

struct DampingSpec {
  double nu = 0.0;  // 1/s, >= 0
};

/// Node positions plus per-node momenta (unit mass, so momenta are
/// velocities). Flat layout: (x_1..x_N, y_1..y_N, px_1..px_N, py_1..py_N).
struct SimState {
  Placement placement;
  std::vector<Vec2> momenta;

  static SimState at_rest(const Placement& p) {
    return SimState{p, std::vector<Vec2>(static_cast<size_t>(p.size()), Vec2::Zero())};
  }

  Eigen::VectorXd to_flat() const {
    const int n = placement.size();
    Eigen::VectorXd z(4 * n);
    for (int i = 0; i < n; ++i) {
      z(i) = placement[i].x();
      z(n + i) = placement[i].y();
      z(2 * n + i) = momenta[static_cast<size_t>(i)].x();
      z(3 * n + i) = momenta[static_cast<size_t>(i)].y();
    }
    return z;
  }

  static SimState from_flat(const Eigen::VectorXd& z) {
    const int n = static_cast<int>(z.size() / 4);
    std::vector<Vec2> nodes(static_cast<size_t>(n)), mom(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      nodes[static_cast<size_t>(i)] = Vec2(z(i), z(n + i));
      mom[static_cast<size_t>(i)] = Vec2(z(2 * n + i), z(3 * n + i));
    }
    return SimState{Placement(std::move(nodes)), std::move(mom)};
  }
};

struct SimDerivative {
  std::vector<Vec2> q_dot;
  std::vector<Vec2> p_dot;
};

/// Zero-rest-length spring force applied to node j by node i.
inline Vec2 linear_force(double omega, const Vec2& qi, const Vec2& qj) {
  return omega * (qi - qj);
}

/// Potential of the zero-rest-length model, 0.5 * q^T (Omega ⊗ I2) q.
inline double linear_potential(const StressMatrix& omega, const Placement& q) {
  const Eigen::VectorXd x = q.x(), y = q.y();
  return 0.5 * (x.dot(omega * x) + y.dot(omega * y));
}

/// Finite-rest-length spring force applied to node j by node i; vanishes at
/// separation equal to the rest length.
inline Vec2 augmented_force(const Edge& e, const Vec2& qi, const Vec2& qj) {
  const Vec2 dq = qi - qj;
  const double r = dq.norm();
  if (r < kMinSeparation) throw CoincidenceError("connected nodes coincide");
  return e.alpha * e.omega * (r - e.rest_length) / r * dq;
}

/// Potential of the augmented model: 0.5 * sum over edges of
/// alpha*omega*(r - l)^2. Stationary (not zero) at the model equilibrium.
inline double augmented_potential(const TensegrityModel& model, const Placement& q) {
  double v = 0.0;
  for (const Edge& e : model.edges) {
    const double r = (q[e.i] - q[e.j]).norm();
    v += 0.5 * e.alpha * e.omega * (r - e.rest_length) * (r - e.rest_length);
  }
  return v;
}

namespace detail {

// Right-hand side on the flat state layout; dz must be preallocated to 4N.
inline void augmented_rhs(const TensegrityModel& model, double nu, const Eigen::VectorXd& z,
                          Eigen::VectorXd& dz) {
  const int n = model.size();
  dz.head(2 * n) = z.segment(2 * n, 2 * n);
  dz.segment(2 * n, 2 * n) = -nu * z.segment(2 * n, 2 * n);
  for (const Edge& e : model.edges) {
    const double dx = z(e.i) - z(e.j);
    const double dy = z(n + e.i) - z(n + e.j);
    const double r = std::sqrt(dx * dx + dy * dy);
    if (r < kMinSeparation) throw CoincidenceError("connected nodes coincide during integration");
    const double w = e.alpha * e.omega * (1.0 - e.rest_length / r);
    dz(2 * n + e.i) -= w * dx;
    dz(2 * n + e.j) += w * dx;
    dz(3 * n + e.i) -= w * dy;
    dz(3 * n + e.j) += w * dy;
  }
}

inline void linear_rhs(const StressMatrix& omega, double nu, const Eigen::VectorXd& z,
                       Eigen::VectorXd& dz) {
  const int n = static_cast<int>(omega.rows());
  dz.head(2 * n) = z.segment(2 * n, 2 * n);
  dz.segment(2 * n, 2 * n).head(n) = -nu * z.segment(2 * n, n) - omega * z.head(n);
  dz.segment(2 * n, 2 * n).tail(n) = -nu * z.segment(3 * n, n) - omega * z.segment(n, n);
}

inline SimDerivative unpack_derivative(const Eigen::VectorXd& dz) {
  const int n = static_cast<int>(dz.size() / 4);
  SimDerivative d;
  d.q_dot.resize(static_cast<size_t>(n));
  d.p_dot.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    d.q_dot[static_cast<size_t>(i)] = Vec2(dz(i), dz(n + i));
    d.p_dot[static_cast<size_t>(i)] = Vec2(dz(2 * n + i), dz(3 * n + i));
  }
  return d;
}

}  // namespace detail

/// Damped double-integrator dynamics of the augmented model:
/// q_dot = p, p_dot = -nu*p - grad of the augmented potential.
inline SimDerivative eom_rhs(const SimState& state, const TensegrityModel& model,
                             DampingSpec damping) {
  Eigen::VectorXd z = state.to_flat();
  Eigen::VectorXd dz(z.size());
  detail::augmented_rhs(model, damping.nu, z, dz);
  return detail::unpack_derivative(dz);
}

/// Same dynamics for the zero-rest-length model, force -(Omega ⊗ I2) q.
inline SimDerivative linear_eom_rhs(const SimState& state, const StressMatrix& omega,
                                    DampingSpec damping) {
  Eigen::VectorXd z = state.to_flat();
  Eigen::VectorXd dz(z.size());
  detail::linear_rhs(omega, damping.nu, z, dz);
  return detail::unpack_derivative(dz);
}

/// Damping a safe margin above the sqrt of the largest Hessian eigenvalue,
/// the sufficiency bound for the linearization argument.
inline double recommended_damping(const Eigen::MatrixXd& hessian) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (hessian + hessian.transpose()));
  const double lambda_max = std::max(0.0, es.eigenvalues()(es.eigenvalues().size() - 1));
  return 1.1 * std::sqrt(lambda_max);
}

struct SimOptions {
  double dt = 1e-3;          // s
  double t_end = 500.0;      // s
  int sample_stride = 100;   // store every stride-th step
  double blowup_limit = 1e9; // abort when any coordinate exceeds this
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;  // flat layout
  int node_count = 0;

  SimState state_at(int k) const { return SimState::from_flat(states[static_cast<size_t>(k)]); }
  SimState final_state() const { return state_at(static_cast<int>(states.size()) - 1); }
  double final_time() const { return times.back(); }
};

/// Classical fixed-step 4th-order integration of the augmented dynamics.
/// `model_at(t)` supplies the (possibly time-varying) model; `observe` is
/// called after every accepted step with (t, z_before, z_after) and may return
/// false to stop early. Deterministic given its inputs.
template <class ModelProvider, class StepObserver>
  requires std::invocable<ModelProvider&, double>
Trajectory simulate(const SimState& initial, ModelProvider&& model_at, DampingSpec damping,
                    const SimOptions& opts, StepObserver&& observe) {
  if (!(opts.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (damping.nu < 0.0) throw std::invalid_argument("damping must be nonnegative");
  const int n = initial.placement.size();
  const long steps = std::lround(opts.t_end / opts.dt);

  Eigen::VectorXd z = initial.to_flat();
  Eigen::VectorXd zprev(4 * n), ztmp(4 * n), k1(4 * n), k2(4 * n), k3(4 * n), k4(4 * n);

  Trajectory traj;
  traj.node_count = n;
  traj.times.reserve(static_cast<size_t>(steps / std::max(1, opts.sample_stride)) + 2);
  traj.times.push_back(0.0);
  traj.states.push_back(z);

  const double dt = opts.dt;
  long k = 0;
  for (; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    zprev = z;
    detail::augmented_rhs(model_at(t), damping.nu, z, k1);
    ztmp = z + (0.5 * dt) * k1;
    detail::augmented_rhs(model_at(t + 0.5 * dt), damping.nu, ztmp, k2);
    ztmp = z + (0.5 * dt) * k2;
    detail::augmented_rhs(model_at(t + 0.5 * dt), damping.nu, ztmp, k3);
    ztmp = z + dt * k3;
    detail::augmented_rhs(model_at(t + dt), damping.nu, ztmp, k4);
    z += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    if (!z.allFinite() || z.cwiseAbs().maxCoeff() > opts.blowup_limit) {
      throw BlowUpError("state exceeded finite range at t=" + std::to_string(t + dt));
    }
    const double t_new = static_cast<double>(k + 1) * dt;
    if ((k + 1) % opts.sample_stride == 0) {
      traj.times.push_back(t_new);
      traj.states.push_back(z);
    }
    if (!observe(t_new, zprev, z)) {
      ++k;
      break;
    }
  }
  const double t_final = static_cast<double>(k) * dt;
  if (traj.times.back() != t_final) {
    traj.times.push_back(t_final);
    traj.states.push_back(z);
  }
  return traj;
}

template <class ModelProvider>
  requires std::invocable<ModelProvider&, double>
Trajectory simulate(const SimState& initial, ModelProvider&& model_at, DampingSpec damping,
                    const SimOptions& opts) {
  return simulate(initial, std::forward<ModelProvider>(model_at), damping, opts,
                  [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) { return true; });
}

inline Trajectory simulate(const SimState& initial, const TensegrityModel& model,
                           DampingSpec damping, const SimOptions& opts) {
  return simulate(
      initial, [&model](double) -> const TensegrityModel& { return model; }, damping, opts);
}

}  // namespace tenseg
