#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tenseg/dynamics.hpp"
#include "tenseg/stability.hpp"

using namespace tenseg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SimState random_state(std::mt19937_64& rng, const Placement& shape, double pos_mag,
                      double mom_mag) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec2> nodes = shape.nodes();
  std::vector<Vec2> momenta(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    nodes[i] += pos_mag * Vec2(u(rng), u(rng));
    momenta[i] = mom_mag * Vec2(u(rng), u(rng));
  }
  return SimState{Placement(nodes), momenta};
}

VectorXd rhs_flat(const TensegrityModel& model, double nu, const VectorXd& z) {
  VectorXd dz(z.size());
  detail::augmented_rhs(model, nu, z, dz);
  return dz;
}

// A two-node "model" with a negative effective spring constant; the dynamics
// diverge, which the tests use to exercise the blow-up guard. Not producible
// by form finding.
TensegrityModel runaway_model() {
  TensegrityModel model;
  model.equilibrium = Placement(std::vector<Vec2>{{0, 0}, {1, 0}, {0, 1}, {1, 1}});
  model.stress = MatrixXd::Zero(4, 4);
  model.eigen_d = VectorXd::Ones(1);
  model.edges.push_back(Edge{0, 1, -1.0, 1.0, 0.5, EdgeKind::strut});
  return model;
}

}  // namespace

TEST_CASE("linear force") {
  CHECK((linear_force(1.0, Vec2(1, 0), Vec2(0, 0)) - Vec2(1, 0)).norm() == 0.0);
  CHECK(linear_force(3.0, Vec2(2, 2), Vec2(2, 2)).norm() == 0.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Vec2 qi(u(rng), u(rng)), qj(u(rng), u(rng));
    const double w = u(rng);
    CHECK((linear_force(w, qi, qj) + linear_force(w, qj, qi)).norm() < 1e-15);
  }
}

TEST_CASE("linear potential agrees between edge sum and quadratic form") {
  // single cable of stress 2 between (0,0) and (1,0): V = 0.5 * 2 * 1^2
  MatrixXd omega(2, 2);
  omega << 2, -2, -2, 2;
  const Placement pair(std::vector<Vec2>{{0, 0}, {1, 0}});
  CHECK(linear_potential(omega, pair) == doctest::Approx(1.0).epsilon(1e-14));

  // the five-node equilibrium lies in the kernel, so its potential vanishes
  CHECK(std::abs(linear_potential(fixtures::fivenode_stress_dense(), fixtures::fivenode())) <
        1e-12);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int rep = 0; rep < 10; ++rep) {
    const Placement p = oracles::random_placement(rng, 6);
    MatrixXd w = MatrixXd::Zero(6, 6);
    for (int i = 0; i < 6; ++i) {
      for (int j = i + 1; j < 6; ++j) {
        const double stress = u(rng);
        w(i, j) = w(j, i) = -stress;
        w(i, i) += stress;
        w(j, j) += stress;
      }
    }
    double edge_sum = 0.0;
    for (int i = 0; i < 6; ++i) {
      for (int j = i + 1; j < 6; ++j) edge_sum += 0.5 * (-w(i, j)) * (p[j] - p[i]).squaredNorm();
    }
    const double quad = linear_potential(w, p);
    CHECK(std::abs(edge_sum - quad) < 1e-10 * std::max(1.0, std::abs(quad)));
  }
}

TEST_CASE("augmented force") {
  const Edge unit{0, 1, 1.0, 1.0, 1.0, EdgeKind::cable};  // alpha*omega = 1, l = 1
  CHECK((augmented_force(unit, Vec2(2, 0), Vec2(0, 0)) - Vec2(1, 0)).norm() < 1e-15);
  CHECK(augmented_force(unit, Vec2(1, 0), Vec2(0, 0)).norm() == 0.0);  // at rest length

  // stretched cable pulls the other node toward its partner, compressed strut
  // pushes it away
  const Edge cable{0, 1, 1.0, 4.0, 0.5, EdgeKind::cable};
  const Edge strut{0, 1, -1.0, -4.0, 2.0, EdgeKind::strut};
  const Vec2 fi_cable = augmented_force(cable, Vec2(1, 0), Vec2(0, 0));
  const Vec2 fi_strut = augmented_force(strut, Vec2(1, 0), Vec2(0, 0));
  CHECK(fi_cable.x() > 0.0);  // force on the node at the origin points toward (1,0)
  CHECK(fi_strut.x() < 0.0);

  CHECK_THROWS_AS(augmented_force(unit, Vec2(0, 0), Vec2(0, 0)), CoincidenceError);
}

TEST_CASE("augmented potential") {
  const TensegrityModel model = build_model(fixtures::fivenode());

  // stationary at the equilibrium: finite differences see a zero gradient and
  // the analytic force (the exact gradient) is zero to machine precision
  auto potential = [&](const VectorXd& q) {
    return augmented_potential(model, Placement::from_stacked(q));
  };
  const VectorXd grad =
      oracles::fd_gradient(potential, model.equilibrium.stacked(), 1e-5);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-5);
  CHECK(static_force_residual(model, model.equilibrium) < 1e-10);

  // one edge with alpha*omega = 1, l = 1 at separation 2 stores 1/2
  TensegrityModel single;
  single.equilibrium = Placement(std::vector<Vec2>{{0, 0}, {2, 0}, {0, 2}, {2, 2}});
  single.stress = MatrixXd::Zero(4, 4);
  single.eigen_d = VectorXd::Ones(1);
  single.edges.push_back(Edge{0, 1, 1.0, 1.0, 1.0, EdgeKind::cable});
  CHECK(augmented_potential(single, single.equilibrium) == doctest::Approx(0.5).epsilon(1e-14));

  // rigid-motion invariance
  std::mt19937_64 rng(6);
  const double base = augmented_potential(model, scaled(model.equilibrium, 1.3));
  for (int rep = 0; rep < 5; ++rep) {
    const double moved = augmented_potential(
        model, oracles::random_motion(rng).apply(scaled(model.equilibrium, 1.3)));
    CHECK(moved == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("equations of motion at and near the equilibrium") {
  const TensegrityModel model = build_model(fixtures::fivenode());
  const DampingSpec damping{0.7};

  const SimDerivative at_eq = eom_rhs(SimState::at_rest(model.equilibrium), model, damping);
  for (const Vec2& v : at_eq.q_dot) CHECK(v.norm() == 0.0);
  for (const Vec2& f : at_eq.p_dot) CHECK(f.norm() < 1e-10);

  // with momenta at the equilibrium the force term still vanishes
  std::mt19937_64 rng(9);
  SimState moving = random_state(rng, model.equilibrium, 0.0, 0.8);
  const SimDerivative d = eom_rhs(moving, model, damping);
  for (size_t i = 0; i < moving.momenta.size(); ++i) {
    CHECK((d.p_dot[i] + damping.nu * moving.momenta[i]).norm() < 1e-10);
    CHECK((d.q_dot[i] - moving.momenta[i]).norm() == 0.0);
  }
}

TEST_CASE("force term matches the potential gradient") {
  std::mt19937_64 rng(12);
  std::vector<TensegrityModel> models;
  models.push_back(build_model(fixtures::fivenode()));
  for (int n : {4, 5, 6, 7}) models.push_back(build_model(oracles::random_placement(rng, n)));
  for (const TensegrityModel& model : models) {
    const int n = model.size();
    auto potential = [&](const VectorXd& q) {
      return augmented_potential(model, Placement::from_stacked(q));
    };
    for (int rep = 0; rep < 20; ++rep) {
      const SimState state = random_state(rng, model.equilibrium, 0.4, 0.5);
      const VectorXd z = state.to_flat();
      const VectorXd dz = rhs_flat(model, 0.0, z);
      const VectorXd force = dz.tail(2 * n);
      const VectorXd grad = oracles::fd_gradient(potential, z.head(2 * n), 1e-6);
      CHECK((force + grad).cwiseAbs().maxCoeff() <
            1e-6 * std::max(1.0, grad.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("internal forces cancel") {
  const TensegrityModel model = build_model(fixtures::fivenode());
  std::mt19937_64 rng(13);
  const double nu = 0.9;
  for (int rep = 0; rep < 20; ++rep) {
    const SimState state = random_state(rng, model.equilibrium, 0.5, 0.7);
    const SimDerivative d = eom_rhs(state, model, DampingSpec{nu});
    Vec2 total = Vec2::Zero(), total_p = Vec2::Zero();
    for (size_t i = 0; i < d.p_dot.size(); ++i) {
      total += d.p_dot[i];
      total_p += state.momenta[i];
    }
    CHECK((total + nu * total_p).norm() < 1e-10);
  }
}

TEST_CASE("scale degeneracy of the zero-rest-length model") {
  const StressMatrix omega = fixtures::fivenode_stress_dense();
  const Placement shape = fixtures::fivenode();

  const SimDerivative at_eq = linear_eom_rhs(SimState::at_rest(shape), omega, DampingSpec{0.5});
  for (const Vec2& f : at_eq.p_dot) CHECK(f.norm() < 1e-12);

  // any anisotropic rescaling keeps the zero-rest-length model at equilibrium,
  // while the augmented model only tolerates the original scale
  const TensegrityModel model = build_model(shape);
  for (double a : {0.5, 0.8, 1.2, 2.0}) {
    for (double b : {0.5, 1.0, 3.0}) {
      const Placement stretched = Placement::from_xy(a * shape.x(), b * shape.y());
      const SimDerivative d = linear_eom_rhs(SimState::at_rest(stretched), omega, DampingSpec{0.5});
      for (const Vec2& f : d.p_dot) CHECK(f.norm() < 1e-12);
      CHECK(static_force_residual(model, stretched) > 1e-3);
    }
  }
}

TEST_CASE("integration holds an equilibrium and commutes with rigid motions") {
  const TensegrityModel model = build_model(fixtures::fivenode());
  const double nu = recommended_damping(second_variation(model));
  SimOptions opts;
  opts.t_end = 2.0;
  opts.sample_stride = 200;

  const Trajectory at_eq = simulate(SimState::at_rest(model.equilibrium), model, DampingSpec{nu}, opts);
  CHECK((at_eq.states.back().head(10) - model.equilibrium.stacked()).cwiseAbs().maxCoeff() < 1e-9);

  const Placement shifted = translated(model.equilibrium, Vec2(3, -1));
  const Trajectory moved = simulate(SimState::at_rest(shifted), model, DampingSpec{nu}, opts);
  CHECK((moved.states.back().head(10) - shifted.stacked()).cwiseAbs().maxCoeff() < 1e-9);

  // equivariance: transform the initial state vs transform the result
  std::mt19937_64 rng(21);
  const RigidMotion g = oracles::random_motion(rng);
  SimState initial = random_state(rng, model.equilibrium, 0.05, 0.1);
  SimState transformed = initial;
  transformed.placement = g.apply(initial.placement);
  const RigidMotion rot_only{g.rotation, Vec2::Zero()};
  for (auto& p : transformed.momenta) p = rot_only.apply(p);

  const Trajectory base = simulate(initial, model, DampingSpec{nu}, opts);
  const Trajectory mapped = simulate(transformed, model, DampingSpec{nu}, opts);
  const Placement base_final = Placement::from_stacked(base.states.back().head(10));
  const Placement mapped_final = Placement::from_stacked(mapped.states.back().head(10));
  const Placement expected = g.apply(base_final);
  for (int i = 0; i < 5; ++i) CHECK((mapped_final[i] - expected[i]).norm() < 1e-8);
}

TEST_CASE("integration order is four") {
  const TensegrityModel model = build_model(fixtures::fivenode());
  std::mt19937_64 rng(22);
  const SimState initial = random_state(rng, model.equilibrium, 0.1, 0.2);
  auto final_state = [&](double dt) {
    SimOptions opts;
    opts.dt = dt;
    opts.t_end = 1.0;
    opts.sample_stride = 1 << 20;
    return simulate(initial, model, DampingSpec{0.8}, opts).states.back();
  };
  const VectorXd reference = final_state(0.00125);
  const double err_coarse = (final_state(0.02) - reference).norm();
  const double err_fine = (final_state(0.01) - reference).norm();
  CHECK(err_coarse / err_fine > 10.0);
  CHECK(err_coarse / err_fine < 24.0);
}

TEST_CASE("energy decreases under damping") {
  const TensegrityModel model = build_model(fixtures::fivenode());
  std::mt19937_64 rng(23);
  const SimState initial = random_state(rng, model.equilibrium, 0.08, 0.3);
  SimOptions opts;
  opts.t_end = 5.0;
  opts.sample_stride = 1;
  const Trajectory traj = simulate(initial, model, DampingSpec{1.2}, opts);
  double prev = std::numeric_limits<double>::infinity();
  for (const VectorXd& z : traj.states) {
    const double kinetic = 0.5 * z.tail(10).squaredNorm();
    const double energy = kinetic + augmented_potential(model, Placement::from_stacked(z.head(10)));
    CHECK(energy <= prev + 1e-8);
    prev = energy;
  }
}

TEST_CASE("blow-up and coincidence guards") {
  SimOptions opts;
  opts.t_end = 100.0;
  CHECK_THROWS_AS(simulate(SimState::at_rest(runaway_model().equilibrium), runaway_model(),
                           DampingSpec{0.0}, opts),
                  BlowUpError);

  TensegrityModel model = build_model(fixtures::fivenode());
  std::vector<Vec2> nodes = model.equilibrium.nodes();
  nodes[1] = nodes[0] + Vec2(1e-10, 0.0);
  CHECK_THROWS_AS(eom_rhs(SimState::at_rest(Placement(nodes)), model, DampingSpec{0.1}),
                  CoincidenceError);

  CHECK_THROWS_AS(simulate(SimState::at_rest(model.equilibrium), model, DampingSpec{0.1},
                           SimOptions{-1.0, 1.0, 1, 1e9}),
                  std::invalid_argument);
  CHECK_THROWS_AS(simulate(SimState::at_rest(model.equilibrium), model, DampingSpec{-0.5},
                           SimOptions{}),
                  std::invalid_argument);
}

TEST_CASE("recommended damping") {
  MatrixXd h = MatrixXd::Zero(2, 2);
  h(0, 0) = 4.0;
  h(1, 1) = 1.0;
  CHECK(recommended_damping(h) == doctest::Approx(2.2).epsilon(1e-14));
  CHECK(recommended_damping(MatrixXd::Zero(3, 3)) == 0.0);

  const TensegrityModel model = build_model(fixtures::fivenode());
  const MatrixXd hess = second_variation(model);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(hess);
  CHECK(recommended_damping(hess) ==
        doctest::Approx(1.1 * std::sqrt(es.eigenvalues().maxCoeff())).epsilon(1e-12));
}
