#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "tenseg/errors.hpp"
#include "tenseg/geometry.hpp"

namespace tenseg {

// Symmetric weighted-Laplacian-like matrix: off-diagonal entries are the
// negated edge stresses, rows sum to zero.
using StressMatrix = Eigen::MatrixXd;

enum class EdgeKind { cable, strut };

inline const char* to_string(EdgeKind k) { return k == EdgeKind::cable ? "cable" : "strut"; }

struct StressEdge {
  int i = 0;
  int j = 0;
  double omega = 0.0;  // stress: > 0 cable, < 0 strut
  EdgeKind kind = EdgeKind::cable;
};

struct Edge {
  int i = 0;
  int j = 0;
  double omega = 0.0;        // stress of the zero-rest-length model
  double alpha = 0.0;        // gain; alpha*omega > 0
  double rest_length = 0.0;  // meters; shorter than the equilibrium distance for cables
  EdgeKind kind = EdgeKind::cable;
};

struct TensegrityModel {
  Placement equilibrium;
  std::vector<Edge> edges;
  StressMatrix stress;
  Eigen::VectorXd eigen_d;  // the N-3 positive eigenvalues prescribed for the stress matrix

  int size() const { return equilibrium.size(); }
};

namespace detail {

inline void require_formable(const Placement& shape) {
  if (shape.size() < 4) throw std::invalid_argument("need at least 4 nodes");
  if (is_collinear(shape)) throw CollinearError("nodes are collinear");
}

}  // namespace detail

struct BasisResult {
  Eigen::MatrixXd lambda;   // N x N orthonormal; first three columns span {1, x, y}
  std::vector<int> pivots;  // standard-basis indices used to complete the basis
};

/// Orthonormal basis whose first three columns span {1, x, y}, completed with
/// standard basis vectors chosen by largest-residual pivoting (or following
/// `pivot_order` when given, skipping near-dependent candidates). Completion
/// column signs are fixed by making the pivot component positive, so the basis
/// is a deterministic and, along smooth shape paths, continuous function of
/// (x, y).
inline BasisResult build_basis_pivoted(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                       const std::vector<int>* pivot_order = nullptr) {
  const int n = static_cast<int>(x.size());
  if (y.size() != n) throw std::invalid_argument("x/y size mismatch");
  if (n < 4) throw std::invalid_argument("need at least 4 nodes");
  detail::require_formable(Placement::from_xy(x, y));

  Eigen::MatrixXd lambda(n, n);
  int cols = 0;
  auto append = [&](Eigen::VectorXd v, double dependence_scale) -> bool {
    // Two projection passes keep the basis orthonormal to machine precision.
    for (int pass = 0; pass < 2; ++pass) {
      for (int c = 0; c < cols; ++c) v -= lambda.col(c).dot(v) * lambda.col(c);
    }
    const double norm = v.norm();
    if (norm <= 1e-12 * std::max(1.0, dependence_scale)) return false;
    lambda.col(cols++) = v / norm;
    return true;
  };

  if (!append(Eigen::VectorXd::Ones(n), 1.0)) throw CollinearError("degenerate seed vectors");
  if (!append(x, x.norm())) throw CollinearError("x is collinear with 1");
  if (!append(y, std::max(x.norm(), y.norm()))) throw CollinearError("y is collinear with {1, x}");

  std::vector<int> pivots;
  std::vector<char> used(static_cast<size_t>(n), 0);
  auto residual_sq = [&](int m) {
    // Squared distance from e_m to the span of the columns built so far.
    double r = 1.0;
    for (int c = 0; c < cols; ++c) r -= lambda(m, c) * lambda(m, c);
    return r;
  };
  while (cols < n) {
    int pick = -1;
    if (pivot_order != nullptr) {
      for (int m : *pivot_order) {
        if (!used[static_cast<size_t>(m)] && residual_sq(m) > 1e-8) {
          pick = m;
          break;
        }
      }
    }
    if (pick < 0) {
      double best = -1.0;
      for (int m = 0; m < n; ++m) {
        if (used[static_cast<size_t>(m)]) continue;
        const double r = residual_sq(m);
        if (r > best) {
          best = r;
          pick = m;
        }
      }
    }
    used[static_cast<size_t>(pick)] = 1;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(pick) = 1.0;
    if (!append(std::move(e), 1.0)) continue;  // dependent candidate, try the next one
    if (lambda(pick, cols - 1) < 0.0) lambda.col(cols - 1) = -lambda.col(cols - 1);
    pivots.push_back(pick);
  }
  return BasisResult{std::move(lambda), std::move(pivots)};
}

inline Eigen::MatrixXd build_basis(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return build_basis_pivoted(x, y).lambda;
}

/// Omega = V diag(d) V^T for orthonormal columns V associated with the
/// prescribed positive eigenvalues d.
inline StressMatrix stress_from_eigenvectors(const Eigen::MatrixXd& vectors,
                                             const Eigen::VectorXd& d) {
  if (vectors.cols() != d.size()) throw std::invalid_argument("eigenvector/eigenvalue count mismatch");
  for (int k = 0; k < d.size(); ++k) {
    if (!(d(k) > 0.0)) throw std::invalid_argument("prescribed eigenvalues must be positive");
  }
  StressMatrix omega = vectors * d.asDiagonal() * vectors.transpose();
  return 0.5 * (omega + omega.transpose());
}

/// Stress matrix with kernel exactly span{x, y, 1} and nonzero eigenvalues d.
/// With all d equal the result is that multiple of the orthogonal projector
/// onto span{x, y, 1}-perp and is independent of the basis completion.
inline StressMatrix synthesize_stress(const Placement& shape, const Eigen::VectorXd& d) {
  const int n = shape.size();
  if (d.size() != n - 3) throw std::invalid_argument("need N-3 prescribed eigenvalues");
  const BasisResult basis = build_basis_pivoted(shape.x(), shape.y());
  return stress_from_eigenvectors(basis.lambda.rightCols(n - 3), d);
}

struct StressValidation {
  double symmetry_defect = 0.0;
  double ones_residual = 0.0;  // max-norm of Omega*1
  double x_residual = 0.0;     // max-norm of Omega*x
  double y_residual = 0.0;     // max-norm of Omega*y
  double eig_floor = 0.0;      // smallest eigenvalue
  double lambda_max = 0.0;     // largest eigenvalue
  int rank = 0;                // eigenvalues above 1e-9 * lambda_max
  int kernel_dim = 0;
  Eigen::VectorXd eigenvalues;  // ascending
  bool pass = false;
};

/// Checks the equilibrium kernel conditions and the spectrum of a stress
/// matrix against a shape. Pass means: symmetric, {x, y, 1} in the kernel, the
/// kernel is exactly three-dimensional, and the remaining spectrum positive.
inline StressValidation validate_stress(const StressMatrix& omega, const Placement& shape) {
  const int n = shape.size();
  if (omega.rows() != n || omega.cols() != n) throw std::invalid_argument("dimension mismatch");
  StressValidation v;
  v.symmetry_defect = (omega - omega.transpose()).cwiseAbs().maxCoeff();
  v.ones_residual = (omega * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff();
  v.x_residual = (omega * shape.x()).cwiseAbs().maxCoeff();
  v.y_residual = (omega * shape.y()).cwiseAbs().maxCoeff();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (omega + omega.transpose()));
  v.eigenvalues = es.eigenvalues();
  v.lambda_max = v.eigenvalues(n - 1);
  v.eig_floor = v.eigenvalues(0);
  const double eig_tol = 1e-9 * std::max(v.lambda_max, 0.0);
  v.rank = 0;
  for (int k = 0; k < n; ++k) {
    if (v.eigenvalues(k) > eig_tol) ++v.rank;
  }
  v.kernel_dim = n - v.rank;

  const double scale = std::max(1.0, omega.cwiseAbs().maxCoeff());
  const double coord = std::max({1.0, shape.x().cwiseAbs().maxCoeff(), shape.y().cwiseAbs().maxCoeff()});
  const double res_tol = 1e-9 * scale * coord;
  v.pass = v.symmetry_defect <= 1e-9 * scale && v.ones_residual <= res_tol &&
           v.x_residual <= res_tol && v.y_residual <= res_tol && v.kernel_dim == 3 &&
           v.eig_floor >= -1e-9 * scale;
  return v;
}

/// Edge-existence threshold: stress entries below this count as "no
/// connection".
inline double default_zero_tol(const StressMatrix& omega) {
  return 1e-9 * omega.cwiseAbs().maxCoeff();
}

inline std::vector<StressEdge> extract_edges(const StressMatrix& omega, double zero_tol) {
  std::vector<StressEdge> edges;
  const int n = static_cast<int>(omega.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double w = -omega(i, j);
      if (std::abs(w) > zero_tol) {
        edges.push_back(StressEdge{i, j, w, w > 0.0 ? EdgeKind::cable : EdgeKind::strut});
      }
    }
  }
  return edges;
}

/// Gain and rest length realizing a given stress at a given equilibrium
/// distance: alpha = pi/arctan(omega), l = r*(1 - arctan(omega)/pi). This
/// makes alpha*(1 - l/r) = 1 and alpha*omega > 0, and is a smooth function of
/// (omega, r) away from omega = 0.
inline std::pair<double, double> augment_parameters(double omega, double rest_distance) {
  if (omega == 0.0) throw std::invalid_argument("zero stress: no edge, gain undefined");
  if (!(rest_distance > 0.0)) throw std::invalid_argument("equilibrium distance must be positive");
  const double a = std::atan(omega);
  const double alpha = std::numbers::pi / a;
  const double l = rest_distance * (1.0 - a / std::numbers::pi);
  return {alpha, l};
}

/// Largest per-node force norm of the augmented model evaluated at q.
inline double static_force_residual(const TensegrityModel& model, const Placement& q) {
  const int n = q.size();
  std::vector<Vec2> force(static_cast<size_t>(n), Vec2::Zero());
  for (const Edge& e : model.edges) {
    const Vec2 dq = q[e.i] - q[e.j];
    const double r = dq.norm();
    if (r < 1e-9) throw CoincidenceError("connected nodes coincide");
    const double w = e.alpha * e.omega * (1.0 - e.rest_length / r);
    force[static_cast<size_t>(e.i)] -= w * dq;
    force[static_cast<size_t>(e.j)] += w * dq;
  }
  double worst = 0.0;
  for (const Vec2& f : force) worst = std::max(worst, f.norm());
  return worst;
}

/// Assembles a model from an already-synthesized stress matrix.
inline TensegrityModel model_from_stress(const Placement& shape, StressMatrix omega,
                                         Eigen::VectorXd eigen_d) {
  const StressValidation check = validate_stress(omega, shape);
  if (!check.pass) throw Error("stress matrix failed validation for this shape");
  const Eigen::MatrixXd r = pairwise_distances(shape);
  TensegrityModel model{shape, {}, std::move(omega), std::move(eigen_d)};
  for (const StressEdge& s : extract_edges(model.stress, default_zero_tol(model.stress))) {
    const auto [alpha, l] = augment_parameters(s.omega, r(s.i, s.j));
    model.edges.push_back(Edge{s.i, s.j, s.omega, alpha, l, s.kind});
  }
  const double residual = static_force_residual(model, shape);
  if (residual >= 1e-9) throw Error("model equilibrium residual too large");
  return model;
}

/// Full form finding: stress synthesis, edge classification, and the augmented
/// spring parameters that pin both geometry and scale of the shape.
inline TensegrityModel build_model(const Placement& shape, const Eigen::VectorXd& d) {
  return model_from_stress(shape, synthesize_stress(shape, d), d);
}

inline TensegrityModel build_model(const Placement& shape) {
  return build_model(shape, Eigen::VectorXd::Ones(shape.size() - 3));
}

namespace detail {

// Derivative-free Nelder-Mead minimization.
template <class F>
Eigen::VectorXd nelder_mead(F&& f, Eigen::VectorXd start, double step, int max_evals) {
  const int dim = static_cast<int>(start.size());
  std::vector<Eigen::VectorXd> pts(static_cast<size_t>(dim + 1), start);
  std::vector<double> val(static_cast<size_t>(dim + 1));
  for (int k = 0; k < dim; ++k) pts[static_cast<size_t>(k + 1)](k) += step;
  for (size_t k = 0; k < pts.size(); ++k) val[k] = f(pts[k]);
  int evals = static_cast<int>(pts.size());
  auto order = [&]() {
    for (size_t a = 0; a < pts.size(); ++a) {
      for (size_t b = a + 1; b < pts.size(); ++b) {
        if (val[b] < val[a]) {
          std::swap(val[a], val[b]);
          std::swap(pts[a], pts[b]);
        }
      }
    }
  };
  order();
  while (evals < max_evals) {
    Eigen::VectorXd mid = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k <= dim - 1; ++k) mid += pts[static_cast<size_t>(k)];
    mid /= dim;
    const size_t worst = pts.size() - 1;
    Eigen::VectorXd refl = mid + (mid - pts[worst]);
    double fr = f(refl);
    ++evals;
    if (fr < val[0]) {
      Eigen::VectorXd expd = mid + 2.0 * (mid - pts[worst]);
      double fe = f(expd);
      ++evals;
      if (fe < fr) {
        pts[worst] = expd;
        val[worst] = fe;
      } else {
        pts[worst] = refl;
        val[worst] = fr;
      }
    } else if (fr < val[worst - 1]) {
      pts[worst] = refl;
      val[worst] = fr;
    } else {
      Eigen::VectorXd contr = mid + 0.5 * (pts[worst] - mid);
      double fc = f(contr);
      ++evals;
      if (fc < val[worst]) {
        pts[worst] = contr;
        val[worst] = fc;
      } else {
        for (size_t k = 1; k < pts.size(); ++k) {
          pts[k] = pts[0] + 0.5 * (pts[k] - pts[0]);
          val[k] = f(pts[k]);
          ++evals;
        }
      }
    }
    order();
    if (val[0] < 1e-30) break;
  }
  return pts[0];
}

}  // namespace detail

namespace detail {

// With the kernel-complement directions V fixed, Omega = V M V^T for a
// positive definite (N-3)x(N-3) matrix M, and every off-diagonal entry of
// Omega is linear in M. Zeroing a set of entries therefore reduces to finding
// a positive definite element of an affine subspace of symmetric matrices,
// which this helper attempts by maximizing the normalized smallest eigenvalue
// over the subspace (a concave objective).
struct ZeroSetSolver {
  int m;
  Eigen::MatrixXd rows;  // N x m: row i is node i's coordinate in the complement

  int sym_dim() const { return m * (m + 1) / 2; }

  Eigen::MatrixXd unpack(const Eigen::VectorXd& s) const {
    Eigen::MatrixXd mat(m, m);
    int a = 0;
    for (int p = 0; p < m; ++p) {
      for (int r = p; r < m; ++r, ++a) {
        mat(p, r) = s(a);
        mat(r, p) = s(a);
      }
    }
    return mat;
  }

  Eigen::VectorXd constraint_row(int i, int j) const {
    Eigen::VectorXd row(sym_dim());
    int a = 0;
    for (int p = 0; p < m; ++p) {
      for (int r = p; r < m; ++r, ++a) {
        row(a) = p == r ? rows(i, p) * rows(j, p)
                        : rows(i, p) * rows(j, r) + rows(i, r) * rows(j, p);
      }
    }
    return row;
  }

  // Best positive definite M with the requested zero entries, or an empty
  // matrix when the subspace contains no well-conditioned PD element.
  Eigen::MatrixXd solve(const std::vector<std::pair<int, int>>& zeros, std::mt19937_64& rng) const {
    const int q = sym_dim();
    const int k = static_cast<int>(zeros.size());
    if (k >= q) return {};
    Eigen::MatrixXd a(k, q);
    for (int c = 0; c < k; ++c) a.row(c) = constraint_row(zeros[static_cast<size_t>(c)].first,
                                                          zeros[static_cast<size_t>(c)].second);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::MatrixXd null_basis = lu.kernel();
    const int p = lu.dimensionOfKernel();
    if (p == 0) return {};

    auto min_eig_normalized = [&](const Eigen::VectorXd& xi) {
      const Eigen::MatrixXd mat = unpack(null_basis * xi);
      const double norm = mat.norm();
      if (norm < 1e-300) return -1.0;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mat / norm, Eigen::EigenvaluesOnly);
      return es.eigenvalues()(0);
    };

    double best_val = -1.0;
    Eigen::VectorXd best_xi;
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int starts = 2 * p + 6;
    for (int s = 0; s < starts; ++s) {
      Eigen::VectorXd xi(p);
      if (s < p) {
        xi.setZero();
        xi(s) = 1.0;
      } else if (s < 2 * p) {
        xi.setZero();
        xi(s - p) = -1.0;
      } else {
        for (int c = 0; c < p; ++c) xi(c) = gauss(rng);
      }
      if (p > 1) {
        xi = nelder_mead([&](const Eigen::VectorXd& v) { return -min_eig_normalized(v); }, xi,
                         0.3, 200 * p);
      }
      const double val = min_eig_normalized(xi);
      if (val > best_val) {
        best_val = val;
        best_xi = xi;
      }
    }
    if (best_val < 1e-4) return {};
    Eigen::MatrixXd mat = unpack(null_basis * best_xi);
    return mat * (m / mat.trace());
  }
};

}  // namespace detail

/// Best-effort search for a model of the given shape with few edges. Candidate
/// zero sets (preferring entries that are already small in the equal-eigenvalue
/// stress matrix) are solved exactly in the space of stress matrices with the
/// prescribed kernel; the largest feasible set wins. The returned model always
/// validates; reaching `budget` edges is not guaranteed.
inline TensegrityModel sparsify(const Placement& shape, int budget, std::uint64_t seed) {
  const int n = shape.size();
  if (budget < 2 * n - 2) throw std::invalid_argument("stable tensegrities need at least 2N-2 edges");
  detail::require_formable(shape);

  TensegrityModel best_model = build_model(shape);
  const int total_pairs = n * (n - 1) / 2;
  if (static_cast<int>(best_model.edges.size()) <= budget) return best_model;

  const int m = n - 3;
  detail::ZeroSetSolver solver{m, build_basis_pivoted(shape.x(), shape.y()).lambda.rightCols(m)};
  std::mt19937_64 rng(seed);

  // Pairs ordered by how small they already are in the baseline matrix.
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
    return std::abs(best_model.stress(a.first, a.second)) <
           std::abs(best_model.stress(b.first, b.second));
  });

  auto build_candidate = [&](const std::vector<std::pair<int, int>>& zeros,
                             const Eigen::MatrixXd& mat) {
    StressMatrix omega = solver.rows * mat * solver.rows.transpose();
    omega = 0.5 * (omega + omega.transpose());
    for (const auto& [i, j] : zeros) {
      omega(i, j) = 0.0;
      omega(j, i) = 0.0;
    }
    for (int i = 0; i < n; ++i) {
      double off = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j != i) off += omega(i, j);
      }
      omega(i, i) = -off;  // exact zero row sums
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
    return model_from_stress(shape, omega, es.eigenvalues().tail(m));
  };

  const int k_max = std::min(total_pairs - budget, solver.sym_dim() - 1);
  for (int k = k_max; k >= 1; --k) {
    // Enumerate size-k subsets of the most promising pairs, cheapest first.
    const int pool = std::min<int>(static_cast<int>(pairs.size()), k + 8);
    std::vector<int> pick(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) pick[static_cast<size_t>(c)] = c;
    int tried = 0;
    bool done = false;
    while (!done && tried < 200) {
      ++tried;
      std::vector<std::pair<int, int>> zeros(static_cast<size_t>(k));
      for (int c = 0; c < k; ++c) zeros[static_cast<size_t>(c)] = pairs[static_cast<size_t>(pick[static_cast<size_t>(c)])];
      const Eigen::MatrixXd mat = solver.solve(zeros, rng);
      if (mat.size() > 0) {
        try {
          const TensegrityModel candidate = build_candidate(zeros, mat);
          if (candidate.edges.size() < best_model.edges.size()) {
            best_model = candidate;
            if (static_cast<int>(best_model.edges.size()) <= budget) return best_model;
          }
        } catch (const Error&) {
          // infeasible after snapping; try the next subset
        }
      }
      // next combination of indices into the pool
      int c = k - 1;
      while (c >= 0 && pick[static_cast<size_t>(c)] == pool - k + c) --c;
      if (c < 0) {
        done = true;
      } else {
        ++pick[static_cast<size_t>(c)];
        for (int r = c + 1; r < k; ++r) pick[static_cast<size_t>(r)] = pick[static_cast<size_t>(r - 1)] + 1;
      }
    }
  }
  return best_model;
}

}  // namespace tenseg
