#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "tenseg/errors.hpp"

namespace tenseg {

using Vec2 = Eigen::Vector2d;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Ordered list of planar node positions. Ordering is significant: two
/// placements with the same geometry but permuted labels are different shapes.
class Placement {
 public:
  Placement() = default;

  explicit Placement(std::vector<Vec2> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw std::invalid_argument("placement needs at least one node");
    for (const auto& q : nodes_) {
      if (!q.allFinite()) throw std::invalid_argument("placement coordinates must be finite");
    }
  }

  static Placement from_xy(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw std::invalid_argument("x/y size mismatch");
    std::vector<Vec2> nodes(static_cast<size_t>(x.size()));
    for (int i = 0; i < x.size(); ++i) nodes[static_cast<size_t>(i)] = Vec2(x(i), y(i));
    return Placement(std::move(nodes));
  }

  /// Inverse of stacked(): q = (x_1..x_N, y_1..y_N).
  static Placement from_stacked(const Eigen::VectorXd& q) {
    if (q.size() % 2 != 0) throw std::invalid_argument("stacked vector must have even length");
    const int n = static_cast<int>(q.size() / 2);
    return from_xy(q.head(n), q.tail(n));
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  const Vec2& operator[](int i) const { return nodes_[static_cast<size_t>(i)]; }
  Vec2& operator[](int i) { return nodes_[static_cast<size_t>(i)]; }
  const std::vector<Vec2>& nodes() const { return nodes_; }

  Eigen::VectorXd x() const {
    Eigen::VectorXd v(size());
    for (int i = 0; i < size(); ++i) v(i) = nodes_[static_cast<size_t>(i)].x();
    return v;
  }
  Eigen::VectorXd y() const {
    Eigen::VectorXd v(size());
    for (int i = 0; i < size(); ++i) v(i) = nodes_[static_cast<size_t>(i)].y();
    return v;
  }
  Eigen::VectorXd stacked() const {
    Eigen::VectorXd v(2 * size());
    v.head(size()) = x();
    v.tail(size()) = y();
    return v;
  }

 private:
  std::vector<Vec2> nodes_;
};

inline Vec2 centroid(const Placement& p) {
  Vec2 c = Vec2::Zero();
  for (const auto& q : p.nodes()) c += q;
  return c / static_cast<double>(p.size());
}

inline Placement translated(const Placement& p, const Vec2& t) {
  std::vector<Vec2> nodes = p.nodes();
  for (auto& q : nodes) q += t;
  return Placement(std::move(nodes));
}

inline Placement recentered(const Placement& p) { return translated(p, -centroid(p)); }

inline Placement scaled(const Placement& p, double s) {
  std::vector<Vec2> nodes = p.nodes();
  for (auto& q : nodes) q *= s;
  return Placement(std::move(nodes));
}

/// Planar rigid motion q -> R(rotation)·q + translation.
struct RigidMotion {
  double rotation = 0.0;  // radians, normalized to (-pi, pi]
  Vec2 translation = Vec2::Zero();

  Vec2 apply(const Vec2& q) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    return Vec2(c * q.x() - s * q.y(), s * q.x() + c * q.y()) + translation;
  }

  Placement apply(const Placement& p) const {
    std::vector<Vec2> nodes(p.nodes().size());
    for (size_t i = 0; i < nodes.size(); ++i) nodes[i] = apply(p.nodes()[i]);
    return Placement(std::move(nodes));
  }
};

inline Placement rotated_about(const Placement& p, double angle, const Vec2& center) {
  RigidMotion rot{normalize_angle(angle), Vec2::Zero()};
  return translated(rot.apply(translated(p, -center)), center);
}

/// r_ij = |q_i - q_j|, symmetric with zero diagonal.
inline Eigen::MatrixXd pairwise_distances(const Placement& p) {
  const int n = p.size();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      r(i, j) = r(j, i) = (p[i] - p[j]).norm();
    }
  }
  return r;
}

/// True iff all nodes are numerically on one line (or coincident): the smaller
/// singular value of the centered coordinate matrix is below rel_tol times the
/// larger one.
inline bool is_collinear(const Placement& p, double rel_tol = 1e-9) {
  const int n = p.size();
  if (n < 3) return true;
  Eigen::MatrixXd c(n, 2);
  const Vec2 g = centroid(p);
  for (int i = 0; i < n; ++i) {
    c(i, 0) = p[i].x() - g.x();
    c(i, 1) = p[i].y() - g.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c);
  const double s0 = svd.singularValues()(0);
  const double s1 = svd.singularValues()(1);
  if (s0 == 0.0) return true;  // all nodes coincident
  return s1 <= rel_tol * s0;
}

struct AlignResult {
  RigidMotion motion;  // applied to `moving` gives the best match of `target`
  Placement aligned;   // motion applied to moving
  double rms = 0.0;    // RMS node distance between aligned and target
};

/// Best rotation-plus-translation (no reflection) mapping `moving` onto
/// `target` in the least-squares sense, solved in closed form: the rotation
/// angle is atan2 of the cross/dot correlation sums of the centered clouds.
inline AlignResult se2_align(const Placement& moving, const Placement& target) {
  const int n = moving.size();
  if (n != target.size()) throw std::invalid_argument("se2_align size mismatch");
  const Vec2 ca = centroid(moving), cb = centroid(target);
  double s_dot = 0.0, s_cross = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec2 a = moving[i] - ca;
    const Vec2 b = target[i] - cb;
    s_dot += a.dot(b);
    s_cross += a.x() * b.y() - a.y() * b.x();
  }
  if (s_dot == 0.0 && s_cross == 0.0) {
    throw DegenerateAlignmentError("alignment rotation undefined (zero correlation sums)");
  }
  const double angle = std::atan2(s_cross, s_dot);
  RigidMotion motion;
  motion.rotation = normalize_angle(angle);
  const double c = std::cos(angle), s = std::sin(angle);
  motion.translation = cb - Vec2(c * ca.x() - s * ca.y(), s * ca.x() + c * ca.y());
  Placement aligned = motion.apply(moving);
  double ss = 0.0;
  for (int i = 0; i < n; ++i) ss += (aligned[i] - target[i]).squaredNorm();
  return AlignResult{motion, std::move(aligned), std::sqrt(ss / n)};
}

/// RMS node distance after the optimal rigid alignment; zero iff the two
/// placements are the same shape with the same node ordering.
inline double shape_distance(const Placement& a, const Placement& b) {
  return se2_align(a, b).rms;
}

/// Sum of squared differences between each node's distance to the current
/// centroid and the same distance in the reference placement. Invariant under
/// rigid motions of either argument. Units m^2.
inline double shape_error(const Placement& current, const Placement& reference) {
  const int n = current.size();
  if (n != reference.size()) throw std::invalid_argument("shape_error size mismatch");
  const Vec2 gc = centroid(current), gr = centroid(reference);
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = (current[i] - gc).norm();
    const double de = (reference[i] - gr).norm();
    e += (d - de) * (d - de);
  }
  return e;
}

/// A shape: the equivalence class of a placement under rotation and
/// translation. Stores the representative recentered at the origin.
class ShapeClass {
 public:
  static constexpr double kEqualityTol = 1e-6;  // meters, RMS

  explicit ShapeClass(const Placement& p) : representative_(recentered(p)) {}

  const Placement& representative() const { return representative_; }
  int size() const { return representative_.size(); }

  bool same_shape(const ShapeClass& other, double tol = kEqualityTol) const {
    if (size() != other.size()) return false;
    return shape_distance(representative_, other.representative_) < tol;
  }

  friend bool operator==(const ShapeClass& a, const ShapeClass& b) { return a.same_shape(b); }
  friend bool operator!=(const ShapeClass& a, const ShapeClass& b) { return !a.same_shape(b); }

 private:
  Placement representative_;
};

}  // namespace tenseg
