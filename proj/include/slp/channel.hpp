#pragma once

#include <complex>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "slp/rng.hpp"

namespace slp {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::RowVectorXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Thrown when a lifted channel is numerically rank deficient.
class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Smallest admissible eigenvalue of the lifted Gram matrix H H^T.
inline constexpr double kRankThreshold = 1e-10;

/// Real-valued lifting of a complex row h (1xN) into [[Re h, -Im h], [Im h, Re h]].
inline MatrixXd lift_real(const RowVectorXcd& h) {
  const Eigen::Index n = h.size();
  MatrixXd out(2, 2 * n);
  out.block(0, 0, 1, n) = h.real();
  out.block(0, n, 1, n) = -h.imag();
  out.block(1, 0, 1, n) = h.imag();
  out.block(1, n, 1, n) = h.real();
  return out;
}

/// Stacks Re/Im of a complex vector: [Re u; Im u].
inline VectorXd lift_vector(const VectorXcd& u) {
  const Eigen::Index n = u.size();
  VectorXd out(2 * n);
  out.head(n) = u.real();
  out.tail(n) = u.imag();
  return out;
}

inline VectorXcd unlift_vector(const VectorXd& u) {
  const Eigen::Index n = u.size() / 2;
  VectorXcd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = {u(i), u(n + i)};
  return out;
}

/// Stacks the per-user liftings: rows 2k, 2k+1 hold H_k.
inline MatrixXd lift_channel(const MatrixXcd& h) {
  MatrixXd out(2 * h.rows(), 2 * h.cols());
  for (Eigen::Index k = 0; k < h.rows(); ++k) out.middleRows(2 * k, 2) = lift_real(h.row(k));
  return out;
}

/// Moore-Penrose inverse H^T (H H^T)^{-1} of a full-row-rank matrix, via a
/// Cholesky solve on the Gram matrix.
inline MatrixXd pseudo_inverse(const MatrixXd& h) {
  const MatrixXd gram = h * h.transpose();
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < kRankThreshold) {
    throw RankDeficientError("Gram matrix is not positive definite (rank deficient channel)");
  }
  const Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw RankDeficientError("Cholesky factorization of Gram matrix failed");
  }
  // (H H^T)^{-1} H = (H^+)^T.
  return llt.solve(h).transpose();
}

/// One complex channel draw with its lifted form and pseudo-inverse.
/// Immutable once built.
class ChannelRealization {
 public:
  explicit ChannelRealization(MatrixXcd h)
      : h_(checked(std::move(h))), lifted_(lift_channel(h_)), pinv_(pseudo_inverse(lifted_)) {}

  int users() const noexcept { return static_cast<int>(h_.rows()); }
  int antennas() const noexcept { return static_cast<int>(h_.cols()); }
  const MatrixXcd& complex() const noexcept { return h_; }
  const MatrixXd& lifted() const noexcept { return lifted_; }
  const MatrixXd& pinv() const noexcept { return pinv_; }

 private:
  static MatrixXcd checked(MatrixXcd h) {
    if (h.rows() < 1 || h.rows() > h.cols()) {
      throw std::invalid_argument("channel needs 1 <= K <= N, got K=" + std::to_string(h.rows()) +
                                  " N=" + std::to_string(h.cols()));
    }
    return h;
  }

  MatrixXcd h_;
  MatrixXd lifted_;
  MatrixXd pinv_;
};

/// i.i.d. CN(0, 1) entries (real and imaginary parts N(0, 1/2)). Draws again
/// if the lifted channel is numerically rank deficient.
template <typename Rng>
ChannelRealization sample_channel(int users, int antennas, Rng& rng) {
  if (users < 1) throw std::invalid_argument("K must be >= 1");
  if (users > antennas) {
    throw std::invalid_argument("K > N violates the full-row-rank channel assumption (K=" +
                                std::to_string(users) + ", N=" + std::to_string(antennas) + ")");
  }
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  for (;;) {
    MatrixXcd h(users, antennas);
    for (int k = 0; k < users; ++k) {
      for (int n = 0; n < antennas; ++n) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        h(k, n) = {re, im};
      }
    }
    try {
      return ChannelRealization(std::move(h));
    } catch (const RankDeficientError&) {
    }
  }
}

}  // namespace slp
