#pragma once

// Shared reference data for the five-node example used across the suite, plus
// the reconfiguration scenario endpoints. The two reference stress matrices
// were derived by hand for this shape: one from equal eigenvalues (9 edges)
// and one from a tuned eigenstructure reaching the 2N-2 edge lower bound.

#include <Eigen/Dense>

#include "tenseg/geometry.hpp"

namespace fixtures {

inline tenseg::Placement fivenode() {
  Eigen::VectorXd x(5), y(5);
  x << 2, 3, 4, 3, 1;
  y << 2, 1, 2, 5, 4;
  return tenseg::Placement::from_xy(x, y);
}

/// Stress matrix of the five-node shape with both nonzero eigenvalues equal
/// to one (the orthogonal projector onto the kernel complement); 9 edges.
inline Eigen::MatrixXd fivenode_stress_dense() {
  Eigen::MatrixXd w(5, 5);
  w << 11.0 / 18, -1.0 / 3, -1.0 / 18, 1.0 / 9, -1.0 / 3,
      -1.0 / 3, 1.0 / 2, -1.0 / 3, 1.0 / 6, 0.0,
      -1.0 / 18, -1.0 / 3, 53.0 / 126, -17.0 / 63, 5.0 / 21,
      1.0 / 9, 1.0 / 6, -17.0 / 63, 23.0 / 126, -4.0 / 21,
      -1.0 / 3, 0.0, 5.0 / 21, -4.0 / 21, 2.0 / 7;
  return w;
}

/// Stress matrix for the same shape with eigenvalues (60/253, 30/253) and a
/// tuned eigenbasis; only 8 = 2N-2 edges (pairs (0,3) and (1,4) are absent).
inline Eigen::MatrixXd fivenode_stress_sparse() {
  Eigen::MatrixXd w(5, 5);
  w << 25.0 / 253, -20.0 / 253, 5.0 / 253, 0.0, -10.0 / 253,
      -20.0 / 253, 30.0 / 253, -20.0 / 253, 10.0 / 253, 0.0,
      5.0 / 253, -20.0 / 253, 135.0 / 1771, -80.0 / 1771, 50.0 / 1771,
      0.0, 10.0 / 253, -80.0 / 1771, 50.0 / 1771, -40.0 / 1771,
      -10.0 / 253, 0.0, 50.0 / 1771, -40.0 / 1771, 60.0 / 1771;
  return w;
}

/// The two eigenvectors behind fivenode_stress_sparse().
inline Eigen::MatrixXd fivenode_sparse_eigenvectors() {
  const double s2 = std::sqrt(2.0), s14 = std::sqrt(14.0);
  Eigen::MatrixXd v(5, 2);
  v.col(0) << s2 / 3, -s2 / 2, s2 / 3, -s2 / 6, 0;
  v.col(1) << -s14 / 6, 0, 5 * s14 / 42, -2 * s14 / 21, s14 / 7;
  return v;
}

inline Eigen::VectorXd fivenode_sparse_d() {
  Eigen::VectorXd d(2);
  d << 60.0 / 253, 30.0 / 253;
  return d;
}

inline tenseg::Placement reconfig_start() {
  Eigen::VectorXd x(5), y(5);
  x << -2.6, -0.6, 1.4, 3.4, -1.6;
  y << -1.2, -1.2, -1.2, -0.2, 3.8;
  return tenseg::Placement::from_xy(x, y);
}

inline tenseg::Placement reconfig_goal() {
  Eigen::VectorXd x(5), y(5);
  x << -0.4, -0.9, 1.1, 1.1, -0.9;
  y << 0, -1, -1, 1, 1;
  return tenseg::Placement::from_xy(x, y);
}

/// Total straight-line distance of the as-given pairing between the scenario
/// endpoints (hand-checkable from the coordinates).
inline double reconfig_direct_cost() {
  double c = 0.0;
  const tenseg::Placement a = reconfig_start(), b = reconfig_goal();
  for (int i = 0; i < a.size(); ++i) c += (a[i] - b[i]).norm();
  return c;
}

}  // namespace fixtures
