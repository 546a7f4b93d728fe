#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <utility>
#include <vector>

#include "tenseg/errors.hpp"
#include "tenseg/form_finding.hpp"
#include "tenseg/geometry.hpp"

namespace tenseg {

/// Bijective map from start node indices to goal node indices, with the total
/// planned straight-line distance it induces.
struct Pairing {
  std::vector<int> perm;
  double cost = 0.0;
};

namespace detail {

// Exact minimum-cost assignment (Jonker-Volgenant style shortest augmenting
// paths with potentials), O(n^3). Returns row -> column.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
  std::vector<int> p(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n + 1), inf);
    std::vector<char> used(static_cast<size_t>(n + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
  }
  return row_to_col;
}

}  // namespace detail

/// Minimum total-distance pairing of start nodes to goal nodes.
inline Pairing optimal_pairing(const Placement& q0, const Placement& qf) {
  const int n = q0.size();
  if (qf.size() != n) throw std::invalid_argument("pairing size mismatch");
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost(i, j) = (q0[i] - qf[j]).norm();
  }
  Pairing pairing{detail::solve_assignment(cost), 0.0};
  for (int i = 0; i < n; ++i) pairing.cost += cost(i, pairing.perm[static_cast<size_t>(i)]);
  return pairing;
}

/// All pairs (i, j) whose planned straight-line trajectories properly
/// intersect (interiors crossing; touching or collinear overlap does not
/// count).
inline std::vector<std::pair<int, int>> crossing_check(const Placement& q0, const Placement& qf,
                                                       const std::vector<int>& pairing) {
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  };
  std::vector<std::pair<int, int>> crossings;
  const int n = q0.size();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Vec2& a = q0[i];
      const Vec2 b = qf[pairing[static_cast<size_t>(i)]];
      const Vec2& c = q0[j];
      const Vec2 d = qf[pairing[static_cast<size_t>(j)]];
      const double d1 = orient(a, b, c), d2 = orient(a, b, d);
      const double d3 = orient(c, d, a), d4 = orient(c, d, b);
      if (d1 * d2 < 0.0 && d3 * d4 < 0.0) crossings.emplace_back(i, j);
    }
  }
  return crossings;
}

namespace detail {

inline Placement rotate_origin(const Placement& p, double angle) {
  return RigidMotion{normalize_angle(angle), Vec2::Zero()}.apply(p);
}

inline double plain_cost(const Placement& q0, const Placement& qf, const std::vector<int>& perm,
                         double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  double total = 0.0;
  for (int i = 0; i < q0.size(); ++i) {
    const Vec2& g = qf[perm[static_cast<size_t>(i)]];
    total += (q0[i] - Vec2(c * g.x() - s * g.y(), s * g.x() + c * g.y())).norm();
  }
  return total;
}

// 1-D minimization of the plain-cost objective over the rotation angle for a
// fixed pairing: coarse scan around the seed, then golden section.
inline double refine_angle(const Placement& q0, const Placement& qf, const std::vector<int>& perm,
                           double seed) {
  double best_a = seed;
  double best_f = plain_cost(q0, qf, perm, seed);
  const double half_width = 0.45;
  for (int k = -45; k <= 45; ++k) {
    const double a = seed + half_width * k / 45.0;
    const double f = plain_cost(q0, qf, perm, a);
    if (f < best_f) {
      best_f = f;
      best_a = a;
    }
  }
  double lo = best_a - 0.02, hi = best_a + 0.02;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = plain_cost(q0, qf, perm, x1), f2 = plain_cost(q0, qf, perm, x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = plain_cost(q0, qf, perm, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = plain_cost(q0, qf, perm, x2);
    }
  }
  const double a = 0.5 * (lo + hi);
  return plain_cost(q0, qf, perm, a) < best_f ? a : best_a;
}

}  // namespace detail

struct Representatives {
  Placement q0;            // start representative, centroid at the origin
  Placement qf;            // goal representative, rotated and reindexed to pair with q0
  Pairing pairing;         // applied permutation and its planned cost
  double goal_rotation = 0.0;
};

/// Representatives of two shapes with a common centroid (the origin), with the
/// goal orientation and node pairing chosen to minimize the total planned
/// straight-line distance. Alternates exact pairing with a 1-D orientation
/// search (closed-form least-squares angle as seed), multi-started from 16
/// initial angles.
inline Representatives select_representatives(const ShapeClass& start, const ShapeClass& goal) {
  if (start.size() != goal.size()) throw std::invalid_argument("shape size mismatch");
  const Placement q0 = start.representative();
  const Placement qfc = goal.representative();
  const int n = q0.size();

  double best_cost = std::numeric_limits<double>::infinity();
  double best_angle = 0.0;
  std::vector<int> best_perm;

  for (int k = 0; k < 16; ++k) {
    double angle = 2.0 * std::numbers::pi * k / 16.0;
    std::vector<int> perm;
    double cost = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 60; ++iter) {
      perm = optimal_pairing(q0, detail::rotate_origin(qfc, angle)).perm;
      // Orientation step for the fixed pairing, seeded by the closed-form
      // least-squares rotation of the paired clouds.
      double s_dot = 0.0, s_cross = 0.0;
      for (int i = 0; i < n; ++i) {
        const Vec2& a = qfc[perm[static_cast<size_t>(i)]];
        const Vec2& b = q0[i];
        s_dot += a.dot(b);
        s_cross += a.x() * b.y() - a.y() * b.x();
      }
      double candidate = angle;
      if (s_dot != 0.0 || s_cross != 0.0) {
        const double procrustes = std::atan2(s_cross, s_dot);
        if (detail::plain_cost(q0, qfc, perm, procrustes) <
            detail::plain_cost(q0, qfc, perm, candidate)) {
          candidate = procrustes;
        }
      }
      angle = detail::refine_angle(q0, qfc, perm, candidate);
      const double new_cost = detail::plain_cost(q0, qfc, perm, angle);
      if (new_cost >= cost - 1e-13) {
        cost = std::min(cost, new_cost);
        break;
      }
      cost = new_cost;
    }
    if (cost < best_cost) {
      best_cost = cost;
      best_angle = angle;
      best_perm = perm;
    }
  }

  const Placement rotated = detail::rotate_origin(qfc, best_angle);
  std::vector<Vec2> paired(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) paired[static_cast<size_t>(i)] = rotated[best_perm[static_cast<size_t>(i)]];
  return Representatives{q0, Placement(std::move(paired)), Pairing{best_perm, best_cost},
                         normalize_angle(best_angle)};
}

/// Straight-line path in shape space between two paired placements, plus the
/// eigenvalues that fix the stiffness of the tensegrity schedule along it.
class ReconfigPlan {
 public:
  ReconfigPlan(Placement q0, Placement qf, double tau, Eigen::VectorXd eigen_d,
               Pairing pairing = {})
      : q0_(std::move(q0)), qf_(std::move(qf)), tau_(tau), eigen_d_(std::move(eigen_d)),
        pairing_(std::move(pairing)) {
    if (q0_.size() != qf_.size()) throw std::invalid_argument("plan endpoint size mismatch");
    if (!(tau_ > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (eigen_d_.size() != q0_.size() - 3) throw std::invalid_argument("need N-3 eigenvalues");
    if ((centroid(q0_) - centroid(qf_)).norm() > 1e-9) {
      throw std::invalid_argument("endpoints must share a centroid");
    }
    // The completion pivot order is fixed at t = 0 so the basis, and with it
    // the schedule, varies continuously along the path.
    pivots_ = build_basis_pivoted(q0_.x(), q0_.y()).pivots;
  }

  const Placement& q0() const { return q0_; }
  const Placement& qf() const { return qf_; }
  double tau() const { return tau_; }
  const Eigen::VectorXd& eigen_d() const { return eigen_d_; }
  const Pairing& pairing() const { return pairing_; }
  const std::vector<int>& pivots() const { return pivots_; }

 private:
  Placement q0_, qf_;
  double tau_;
  Eigen::VectorXd eigen_d_;
  Pairing pairing_;
  std::vector<int> pivots_;
};

inline ReconfigPlan plan_reconfiguration(const ShapeClass& start, const ShapeClass& goal,
                                         double tau, const Eigen::VectorXd& eigen_d) {
  Representatives reps = select_representatives(start, goal);
  return ReconfigPlan(std::move(reps.q0), std::move(reps.qf), tau, eigen_d,
                      std::move(reps.pairing));
}

inline ReconfigPlan plan_reconfiguration(const ShapeClass& start, const ShapeClass& goal,
                                         double tau) {
  return plan_reconfiguration(start, goal, tau, Eigen::VectorXd::Ones(start.size() - 3));
}

/// Plan between endpoints whose node ordering already encodes the pairing
/// (node i travels to goal node i) and whose orientations are taken as given;
/// both are recentered to the origin.
inline ReconfigPlan direct_plan(const Placement& q0, const Placement& qf, double tau,
                                const Eigen::VectorXd& eigen_d) {
  Placement start = recentered(q0);
  Placement goal = recentered(qf);
  Pairing pairing;
  pairing.perm.resize(static_cast<size_t>(q0.size()));
  for (int i = 0; i < q0.size(); ++i) {
    pairing.perm[static_cast<size_t>(i)] = i;
    pairing.cost += (start[i] - goal[i]).norm();
  }
  return ReconfigPlan(std::move(start), std::move(goal), tau, eigen_d, std::move(pairing));
}

inline ReconfigPlan direct_plan(const Placement& q0, const Placement& qf, double tau) {
  return direct_plan(q0, qf, tau, Eigen::VectorXd::Ones(q0.size() - 3));
}

/// Planned placement at time t: linear interpolation on [0, tau], frozen at
/// the goal afterwards.
inline Placement interpolate(const ReconfigPlan& plan, double t) {
  if (t < 0.0) throw std::invalid_argument("time must be nonnegative");
  if (t >= plan.tau()) return plan.qf();
  const double s = t / plan.tau();
  std::vector<Vec2> nodes(static_cast<size_t>(plan.q0().size()));
  for (int i = 0; i < plan.q0().size(); ++i) {
    nodes[static_cast<size_t>(i)] = (1.0 - s) * plan.q0()[i] + s * plan.qf()[i];
  }
  return Placement(std::move(nodes));
}

/// Tensegrity model whose equilibrium is the planned placement at time t.
/// Frozen for t >= tau. The stress matrix is rebuilt with the pivot order
/// fixed at t = 0, so the schedule is a smooth function of t on [0, tau).
inline TensegrityModel schedule_at(const ReconfigPlan& plan, double t) {
  const Placement shape = interpolate(plan, t);
  if (is_collinear(shape)) {
    throw CollinearError("interpolated shape is collinear at t=" + std::to_string(t) +
                         "; route through an intermediate via-shape");
  }
  const BasisResult basis = build_basis_pivoted(shape.x(), shape.y(), &plan.pivots());
  const int n = shape.size();
  StressMatrix omega = stress_from_eigenvectors(basis.lambda.rightCols(n - 3), plan.eigen_d());
  return model_from_stress(shape, std::move(omega), plan.eigen_d());
}

/// Model provider for simulate(): rebuilds the model while the schedule moves
/// and serves a cached copy once it freezes.
class ScheduleProvider {
 public:
  explicit ScheduleProvider(const ReconfigPlan& plan)
      : plan_(&plan), frozen_(schedule_at(plan, plan.tau())) {}

  const TensegrityModel& operator()(double t) const {
    if (t >= plan_->tau()) return frozen_;
    scratch_ = schedule_at(*plan_, t);
    return scratch_;
  }

 private:
  const ReconfigPlan* plan_;
  TensegrityModel frozen_;
  mutable TensegrityModel scratch_;
};

struct EdgeEvent {
  double t = 0.0;
  int i = 0;
  int j = 0;
  enum class Kind { appeared, disappeared, sign_flip } kind = Kind::appeared;
};

/// Scans the schedule and reports where pairs gain an edge, lose an edge, or
/// flip between cable and strut.
inline std::vector<EdgeEvent> schedule_edge_events(const ReconfigPlan& plan, int samples) {
  std::vector<EdgeEvent> events;
  const int n = plan.q0().size();
  auto classify = [&](const StressMatrix& omega) {
    const double tol = default_zero_tol(omega);
    Eigen::MatrixXi sign = Eigen::MatrixXi::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double w = -omega(i, j);
        sign(i, j) = std::abs(w) <= tol ? 0 : (w > 0.0 ? 1 : -1);
      }
    }
    return sign;
  };
  Eigen::MatrixXi prev = classify(schedule_at(plan, 0.0).stress);
  for (int k = 1; k <= samples; ++k) {
    const double t = plan.tau() * k / samples;
    const Eigen::MatrixXi cur = classify(schedule_at(plan, t).stress);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (cur(i, j) == prev(i, j)) continue;
        EdgeEvent ev{t, i, j, EdgeEvent::Kind::appeared};
        if (prev(i, j) == 0) {
          ev.kind = EdgeEvent::Kind::appeared;
        } else if (cur(i, j) == 0) {
          ev.kind = EdgeEvent::Kind::disappeared;
        } else {
          ev.kind = EdgeEvent::Kind::sign_flip;
        }
        events.push_back(ev);
      }
    }
    prev = cur;
  }
  return events;
}

namespace detail {

// Input vector of the scheduled control law at time t: per node pair, the
// stress and planned distance; for pairs that carry an edge over the whole
// path, also the gain and rest length (both undefined where the stress
// vanishes).
inline Eigen::VectorXd schedule_input(const ReconfigPlan& plan, double t,
                                      const std::vector<char>& persistent) {
  const TensegrityModel model = schedule_at(plan, t);
  const Placement shape = interpolate(plan, t);
  const int n = shape.size();
  const Eigen::MatrixXd r = pairwise_distances(shape);
  std::vector<double> u;
  u.reserve(static_cast<size_t>(2 * n * (n - 1)));
  int pair_idx = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++pair_idx) {
      const double w = -model.stress(i, j);
      u.push_back(w);
      u.push_back(r(i, j));
      if (persistent[static_cast<size_t>(pair_idx)]) {
        const auto [alpha, l] = augment_parameters(w, r(i, j));
        u.push_back(alpha);
        u.push_back(l);
      }
    }
  }
  return Eigen::Map<Eigen::VectorXd>(u.data(), static_cast<long>(u.size()));
}

inline std::vector<char> persistent_edge_pairs(const ReconfigPlan& plan, int samples) {
  // The gain alpha = pi/arctan(omega) has a pole at omega = 0, so pairs whose
  // stress comes near zero anywhere on the path carry only their (omega, r)
  // components in the input vector.
  const int n = plan.q0().size();
  std::vector<char> persistent(static_cast<size_t>(n * (n - 1) / 2), 1);
  for (int k = 0; k <= samples; ++k) {
    const double t = plan.tau() * k / samples;
    const StressMatrix omega = schedule_at(plan, t).stress;
    const double floor = 1e-2 * omega.cwiseAbs().maxCoeff();
    int pair_idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j, ++pair_idx) {
        if (std::abs(omega(i, j)) <= floor) persistent[static_cast<size_t>(pair_idx)] = 0;
      }
    }
  }
  return persistent;
}

}  // namespace detail

/// Windowed average input rate (1/T) * integral over [t, t+T] of |u_dot|,
/// evaluated on a uniform grid of `samples` intervals covering [0, tau]
/// (extended past tau, where the schedule is frozen and the rate is zero).
inline std::vector<double> slow_variation_profile(const ReconfigPlan& plan, double window,
                                                  int samples) {
  if (samples < 2) throw std::invalid_argument("need at least 2 samples");
  if (!(window > 0.0)) throw std::invalid_argument("window must be positive");
  const double dt = plan.tau() / samples;
  const int w = std::max(1, static_cast<int>(std::lround(window / dt)));
  const int total = samples + w + 1;

  const std::vector<char> persistent = detail::persistent_edge_pairs(plan, samples);
  std::vector<Eigen::VectorXd> u(static_cast<size_t>(total + 1));
  for (int k = 0; k <= total; ++k) {
    u[static_cast<size_t>(k)] = detail::schedule_input(plan, k * dt, persistent);
  }
  std::vector<double> rate(static_cast<size_t>(total));
  for (int k = 0; k < total; ++k) {
    rate[static_cast<size_t>(k)] = (u[static_cast<size_t>(k + 1)] - u[static_cast<size_t>(k)]).norm() / dt;
  }
  std::vector<double> profile(static_cast<size_t>(total - w + 1));
  for (int k = 0; k + w <= total; ++k) {
    double acc = 0.0;
    for (int j = k; j < k + w; ++j) acc += rate[static_cast<size_t>(j)] * dt;
    profile[static_cast<size_t>(k)] = acc / (w * dt);
  }
  return profile;
}

/// Max over t of the windowed average input rate; scales as 1/tau.
inline double slow_variation_diagnostic(const ReconfigPlan& plan, double window, int samples) {
  const std::vector<double> profile = slow_variation_profile(plan, window, samples);
  return *std::max_element(profile.begin(), profile.end());
}

}  // namespace tenseg
