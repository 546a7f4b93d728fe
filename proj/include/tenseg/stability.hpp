#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "tenseg/dynamics.hpp"
#include "tenseg/errors.hpp"
#include "tenseg/form_finding.hpp"
#include "tenseg/geometry.hpp"

namespace tenseg {

/// Laplacian-like blocks of the potential Hessian coming from the nonzero
/// rest lengths, evaluated at the model equilibrium.
struct HessianBlocks {
  Eigen::MatrixXd lx, ly, lxy;
};

inline HessianBlocks hessian_blocks(const TensegrityModel& model) {
  const int n = model.size();
  HessianBlocks b{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                  Eigen::MatrixXd::Zero(n, n)};
  const Placement& q = model.equilibrium;
  for (const Edge& e : model.edges) {
    const double dx = q[e.i].x() - q[e.j].x();
    const double dy = q[e.i].y() - q[e.j].y();
    const double r = std::sqrt(dx * dx + dy * dy);
    const double c = e.alpha * e.omega * e.rest_length / (r * r * r);
    const double cxx = c * dx * dx, cyy = c * dy * dy, cxy = c * dx * dy;
    b.lx(e.i, e.j) -= cxx;
    b.lx(e.j, e.i) -= cxx;
    b.lx(e.i, e.i) += cxx;
    b.lx(e.j, e.j) += cxx;
    b.ly(e.i, e.j) -= cyy;
    b.ly(e.j, e.i) -= cyy;
    b.ly(e.i, e.i) += cyy;
    b.ly(e.j, e.j) += cyy;
    b.lxy(e.i, e.j) -= cxy;
    b.lxy(e.j, e.i) -= cxy;
    b.lxy(e.i, e.i) += cxy;
    b.lxy(e.j, e.j) += cxy;
  }
  return b;
}

/// Hessian of the augmented potential at the model equilibrium:
/// [[Omega + Lx, Lxy], [Lxy, Omega + Ly]].
inline Eigen::MatrixXd second_variation(const TensegrityModel& model) {
  const int n = model.size();
  const HessianBlocks b = hessian_blocks(model);
  Eigen::MatrixXd h(2 * n, 2 * n);
  h.topLeftCorner(n, n) = model.stress + b.lx;
  h.topRightCorner(n, n) = b.lxy;
  h.bottomLeftCorner(n, n) = b.lxy;
  h.bottomRightCorner(n, n) = model.stress + b.ly;
  return 0.5 * (h + h.transpose());
}

struct KernelCheck {
  int zero_count = 0;
  double angle = std::numeric_limits<double>::quiet_NaN();  // principal angle, rad
  bool pass = false;
  Eigen::MatrixXd kernel;  // 2N x zero_count eigenvectors of the near-zero eigenvalues
};

/// Compares the Hessian null space with the rigid-motion directions
/// span{(1,0), (0,1), (-y, x)}. Pass requires exactly three near-zero
/// eigenvalues and a principal angle below 1e-6 rad.
inline KernelCheck check_kernel(const Eigen::MatrixXd& hessian, const Placement& shape) {
  const int n = shape.size();
  if (hessian.rows() != 2 * n) throw std::invalid_argument("hessian/shape size mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian);
  const Eigen::VectorXd evals = es.eigenvalues();
  const double tol = 1e-9 * std::max(1.0, evals.cwiseAbs().maxCoeff());

  KernelCheck result;
  for (int k = 0; k < evals.size(); ++k) {
    if (std::abs(evals(k)) < tol) ++result.zero_count;
  }
  if (result.zero_count != 3) return result;

  Eigen::MatrixXd u(2 * n, 3);
  int col = 0;
  for (int k = 0; k < evals.size() && col < 3; ++k) {
    if (std::abs(evals(k)) < tol) u.col(col++) = es.eigenvectors().col(k);
  }
  Eigen::MatrixXd w(2 * n, 3);
  w.setZero();
  w.col(0).head(n).setOnes();
  w.col(1).tail(n).setOnes();
  w.col(2).head(n) = -shape.y();
  w.col(2).tail(n) = shape.x();
  const Eigen::MatrixXd w_ortho = Eigen::HouseholderQR<Eigen::MatrixXd>(w)
                                      .householderQ() *
                                  Eigen::MatrixXd::Identity(2 * n, 3);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(u.transpose() * w_ortho);
  const double sigma_min = svd.singularValues()(2);
  result.angle = std::acos(std::clamp(sigma_min, -1.0, 1.0));
  result.kernel = u;
  result.pass = result.angle < 1e-6;
  return result;
}

/// Factored evaluation of the rest-length curvature form: a sum of manifestly
/// nonnegative terms, one per edge.
inline double rest_length_curvature_factored(const TensegrityModel& model,
                                             const Eigen::VectorXd& qx,
                                             const Eigen::VectorXd& qy) {
  const Placement& q = model.equilibrium;
  double total = 0.0;
  for (const Edge& e : model.edges) {
    const double dx = q[e.i].x() - q[e.j].x();
    const double dy = q[e.i].y() - q[e.j].y();
    const double r = std::sqrt(dx * dx + dy * dy);
    const double c = e.alpha * e.omega * e.rest_length / (r * r * r);
    const double term = dy * (qy(e.i) - qy(e.j)) + dx * (qx(e.i) - qx(e.j));
    total += c * term * term;
  }
  return total;
}

/// The same quadratic form evaluated through the assembled Hessian blocks.
inline double rest_length_curvature_quadratic(const TensegrityModel& model,
                                              const Eigen::VectorXd& qx,
                                              const Eigen::VectorXd& qy) {
  const HessianBlocks b = hessian_blocks(model);
  return qx.dot(b.lx * qx) + qy.dot(b.ly * qy) + 2.0 * qx.dot(b.lxy * qy);
}

/// Linearization of the damped dynamics at (equilibrium, 0):
/// [[0, I], [-Hessian, -nu I]].
inline Eigen::MatrixXd jacobian(const TensegrityModel& model, DampingSpec damping) {
  const int n2 = 2 * model.size();
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n2, 2 * n2);
  j.topRightCorner(n2, n2) = Eigen::MatrixXd::Identity(n2, n2);
  j.bottomLeftCorner(n2, n2) = -second_variation(model);
  j.bottomRightCorner(n2, n2) = -damping.nu * Eigen::MatrixXd::Identity(n2, n2);
  return j;
}

inline std::vector<std::complex<double>> jacobian_spectrum(const Eigen::MatrixXd& jac) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(jac, /*computeEigenvectors=*/false);
  std::vector<std::complex<double>> evals(static_cast<size_t>(jac.rows()));
  for (int k = 0; k < jac.rows(); ++k) evals[static_cast<size_t>(k)] = es.eigenvalues()(k);
  std::sort(evals.begin(), evals.end(),
            [](const auto& a, const auto& b) { return std::abs(a) < std::abs(b); });
  return evals;
}

/// Decay margin of the linearization after excluding the three symmetry
/// eigenvalues: -max Re over the remaining spectrum. Positive means every
/// non-symmetry mode decays. Throws if the three smallest-magnitude
/// eigenvalues are not numerically zero.
inline double spectral_margin(const Eigen::MatrixXd& jac) {
  const auto evals = jacobian_spectrum(jac);
  // The zero eigenvalues of the undamped symmetry modes are defective, so they
  // are only computable to O(sqrt(eps)); the tolerance reflects that.
  const double tol = 1e-7 * std::max(1.0, std::abs(evals.back()));
  if (evals.size() < 4 || std::abs(evals[2]) >= tol) {
    throw SpectralError("expected three near-zero symmetry eigenvalues");
  }
  double worst = -std::numeric_limits<double>::infinity();
  for (size_t k = 3; k < evals.size(); ++k) worst = std::max(worst, evals[k].real());
  return -worst;
}

/// Everything the stability certificate reports: spectra, kernel geometry,
/// margins, and per-check flags.
struct StabilityReport {
  StressValidation stress;
  Eigen::VectorXd hessian_spectrum;  // ascending
  Eigen::MatrixXd kernel_basis;
  double kernel_match_error = std::numeric_limits<double>::quiet_NaN();
  int kernel_zero_count = 0;
  std::vector<std::complex<double>> jacobian_eigenvalues;
  double spectral_margin = std::numeric_limits<double>::quiet_NaN();
  double damping_bound = std::numeric_limits<double>::quiet_NaN();  // sqrt(lambda_max)
  double nu = std::numeric_limits<double>::quiet_NaN();
  bool stress_ok = false;
  bool hessian_psd = false;
  bool kernel_ok = false;
  bool margin_ok = false;
  bool pass = false;
  std::string failed_stage;
};

}  // namespace tenseg
