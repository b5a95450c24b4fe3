#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace slp {

using Point2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Default slack allowed by dpcir_contains, relative to a unit-power constellation.
inline constexpr double kDefaultContainTol = 1e-9;

/// M-PSK constellation with unit average power.
///
/// Every point carries the two neighbours it shares an ML decision boundary
/// with, and the 2x2 matrix A_i whose rows are the outward normals
/// (x_i - x_nb)^T of its distance-preserving constructive interference region
/// (DPCIR): { y : A_i (y - x_i) >= 0 }. Row 0 belongs to neighbour (i-1) mod M,
/// row 1 to neighbour (i+1) mod M.
///
/// Immutable after construction.
class Constellation {
 public:
  static Constellation psk(int order) {
    if (order < 2) {
      throw std::invalid_argument("PSK order must be >= 2, got " + std::to_string(order));
    }
    if (order < 4) {
      // BPSK points have a single neighbour, so A_i would be 1x2 and singular.
      throw std::invalid_argument("PSK order " + std::to_string(order) +
                                  " has one neighbour per point; DPCIR needs M >= 4");
    }
    Constellation c;
    c.order_ = order;
    c.points_.reserve(order);
    for (int i = 0; i < order; ++i) {
      const double theta = 2.0 * std::numbers::pi * i / order + std::numbers::pi / order;
      c.points_.emplace_back(std::cos(theta), std::sin(theta));
    }
    c.neighbors_.reserve(order);
    c.dpcir_.reserve(order);
    c.dpcir_inv_.reserve(order);
    for (int i = 0; i < order; ++i) {
      const std::array<int, 2> nb{(i + order - 1) % order, (i + 1) % order};
      Mat2 a;
      a.row(0) = (c.points_[i] - c.points_[nb[0]]).transpose();
      a.row(1) = (c.points_[i] - c.points_[nb[1]]).transpose();
      if (std::abs(a.determinant()) <= 1e-12) {
        throw std::logic_error("singular DPCIR matrix");
      }
      c.neighbors_.push_back(nb);
      c.dpcir_.push_back(a);
      c.dpcir_inv_.push_back(a.inverse());
    }
    return c;
  }

  int order() const noexcept { return order_; }
  const std::vector<Point2>& points() const noexcept { return points_; }
  const Point2& point(int i) const { return points_.at(check(i)); }
  const std::array<int, 2>& neighbors(int i) const { return neighbors_.at(check(i)); }

  /// A_i, rows ordered (i-1) mod M then (i+1) mod M.
  const Mat2& dpcir_matrix(int i) const { return dpcir_.at(check(i)); }
  const Mat2& dpcir_inverse(int i) const { return dpcir_inv_.at(check(i)); }

  double average_power() const {
    double s = 0.0;
    for (const auto& p : points_) s += p.squaredNorm();
    return s / order_;
  }

  /// Single-user ML decision: nearest point, lowest index on ties.
  int ml_detect(const Point2& y) const noexcept {
    int best = 0;
    double best_d = (y - points_[0]).squaredNorm();
    for (int i = 1; i < order_; ++i) {
      const double d = (y - points_[i]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  /// True iff A_i (y - scale * x_i) >= -tol componentwise.
  bool dpcir_contains(int i, const Point2& y, double scale, double tol = kDefaultContainTol) const {
    if (!(scale > 0.0)) throw std::invalid_argument("DPCIR scale must be positive");
    const Point2 slack = dpcir_matrix(i) * (y - scale * points_[i]);
    return slack.minCoeff() >= -tol;
  }

 private:
  Constellation() = default;

  int check(int i) const {
    if (i < 0 || i >= order_) {
      throw std::out_of_range("constellation index " + std::to_string(i) + " out of range [0, " +
                              std::to_string(order_) + ")");
    }
    return i;
  }

  int order_ = 0;
  std::vector<Point2> points_;
  std::vector<std::array<int, 2>> neighbors_;
  std::vector<Mat2> dpcir_;
  std::vector<Mat2> dpcir_inv_;
};

}  // namespace slp
