#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "slp/channel.hpp"
#include "slp/constellation.hpp"
#include "slp/nnls.hpp"

namespace slp {

enum class Scheme { ZFBF, CF_SLP, OPT_SLP };

inline constexpr std::string_view scheme_name(Scheme s) noexcept {
  switch (s) {
    case Scheme::ZFBF: return "ZFBF";
    case Scheme::CF_SLP: return "CF_SLP";
    case Scheme::OPT_SLP: return "OPT_SLP";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::ZFBF, Scheme::CF_SLP, Scheme::OPT_SLP})
    if (scheme_name(s) == name) return s;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

/// |v_l| at or below this counts as zero, so the constraint is presumed active.
inline constexpr double kZeroV = 1e-12;

/// One symbol slot of the stacked constructive-interference problem.
///
/// With H the lifted channel, A = blkdiag(A_{i_1}, ..., A_{i_K}) and
/// target t = Sigma Gamma^{1/2} x:
///   C    = H^+ A^{-1}            (2N x 2K)
///   u_zf = H^+ t
///   Q    = C^T C,  v = C^T u_zf
/// and every feasible transmit vector of least norm is u_zf + C delta, delta >= 0.
///
/// Holds a pointer to the channel; the channel must outlive the slot.
struct SlotProblem {
  const ChannelRealization* channel = nullptr;
  std::vector<int> symbols;
  VectorXd sigma;
  VectorXd gamma;
  std::vector<Mat2> a_blocks;
  std::vector<Mat2> a_inv_blocks;
  VectorXd x_stack;
  VectorXd target;
  MatrixXd C;
  VectorXd u_zf;
  MatrixXd Q;
  VectorXd v;

  int users() const noexcept { return static_cast<int>(symbols.size()); }

  /// Block-diagonal A as a dense 2K x 2K matrix.
  MatrixXd a_dense() const {
    MatrixXd a = MatrixXd::Zero(2 * users(), 2 * users());
    for (int k = 0; k < users(); ++k) a.block<2, 2>(2 * k, 2 * k) = a_blocks[k];
    return a;
  }

  VectorXd apply_a(const VectorXd& y) const {
    VectorXd out(y.size());
    for (int k = 0; k < users(); ++k) out.segment<2>(2 * k) = a_blocks[k] * y.segment<2>(2 * k);
    return out;
  }

  VectorXd apply_a_inv(const VectorXd& y) const {
    VectorXd out(y.size());
    for (int k = 0; k < users(); ++k) out.segment<2>(2 * k) = a_inv_blocks[k] * y.segment<2>(2 * k);
    return out;
  }
};

/// Stacked target Sigma Gamma^{1/2} x for the given symbols.
inline VectorXd scaled_target(const Constellation& constellation, std::span<const int> symbols,
                              const VectorXd& sigma, const VectorXd& gamma) {
  VectorXd t(2 * static_cast<Eigen::Index>(symbols.size()));
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    t.segment<2>(2 * kk) = sigma(kk) * std::sqrt(gamma(kk)) * constellation.point(symbols[k]);
  }
  return t;
}

inline SlotProblem build_slot(const ChannelRealization& channel, const Constellation& constellation,
                              std::span<const int> symbols, const VectorXd& sigma, const VectorXd& gamma) {
  const int users = channel.users();
  if (static_cast<int>(symbols.size()) != users || sigma.size() != users || gamma.size() != users) {
    throw std::invalid_argument("slot needs one symbol, sigma and gamma per user (K=" +
                                std::to_string(users) + ")");
  }
  SlotProblem s;
  s.channel = &channel;
  s.symbols.assign(symbols.begin(), symbols.end());
  s.sigma = sigma;
  s.gamma = gamma;
  s.a_blocks.reserve(users);
  s.a_inv_blocks.reserve(users);
  s.x_stack.resize(2 * users);
  for (int k = 0; k < users; ++k) {
    if (!(sigma(k) > 0.0) || !(gamma(k) > 0.0)) {
      throw std::invalid_argument("sigma and gamma must be positive (user " + std::to_string(k) + ")");
    }
    const Mat2& a = constellation.dpcir_matrix(symbols[k]);
    const double det = a.determinant();
    if (std::abs(det) <= 1e-12) throw std::runtime_error("singular DPCIR block for user " + std::to_string(k));
    Mat2 inv;
    inv << a(1, 1), -a(0, 1), -a(1, 0), a(0, 0);
    inv /= det;
    s.a_blocks.push_back(a);
    s.a_inv_blocks.push_back(inv);
    s.x_stack.segment<2>(2 * k) = constellation.point(symbols[k]);
  }
  s.target = scaled_target(constellation, symbols, sigma, gamma);

  const MatrixXd& pinv = channel.pinv();
  s.C.resize(pinv.rows(), 2 * users);
  for (int k = 0; k < users; ++k) {
    s.C.middleCols<2>(2 * k).noalias() = pinv.middleCols<2>(2 * k) * s.a_inv_blocks[k];
  }
  s.u_zf.noalias() = pinv * s.target;
  s.Q.noalias() = s.C.transpose() * s.C;
  s.v.noalias() = s.C.transpose() * s.u_zf;
  return s;
}

/// Uniform-gamma, uniform-sigma convenience overload.
inline SlotProblem build_slot(const ChannelRealization& channel, const Constellation& constellation,
                              std::span<const int> symbols, double sigma, double gamma) {
  const auto k = static_cast<Eigen::Index>(symbols.size());
  return build_slot(channel, constellation, symbols, VectorXd::Constant(k, sigma), VectorXd::Constant(k, gamma));
}

/// KKT residuals of delta for min ||u_zf + C delta||^2, delta >= 0, with
/// psi = Q delta + v (the multiplier is -2 psi).
struct KktResiduals {
  double dual_feasibility = 0.0;  // max(0, -min psi)
  double complementarity = 0.0;   // max |psi_l delta_l|
  double primal = 0.0;            // max(0, -min delta)

  double worst() const noexcept { return std::max({dual_feasibility, complementarity, primal}); }
};

inline KktResiduals verify_kkt(const SlotProblem& slot, const VectorXd& delta) {
  const VectorXd psi = slot.Q * delta + slot.v;
  KktResiduals r;
  r.dual_feasibility = std::max(0.0, -psi.minCoeff());
  r.complementarity = psi.cwiseProduct(delta).cwiseAbs().maxCoeff();
  r.primal = std::max(0.0, -delta.minCoeff());
  return r;
}

struct PrecodeResult {
  Scheme scheme = Scheme::ZFBF;
  VectorXd u;
  VectorXd delta;
  double power = 0.0;
  double ci_residual = 0.0;
  KktResiduals kkt;
  std::chrono::nanoseconds elapsed{0};
  bool solver_capped = false;
};

/// Largest violation of H u = t + A^{-1} delta and of A (H u - t) >= 0.
inline double ci_residual(const SlotProblem& slot, const VectorXd& u, const VectorXd& delta) {
  const VectorXd offset = slot.channel->lifted() * u - slot.target;
  const double eq = (offset - slot.apply_a_inv(delta)).cwiseAbs().maxCoeff();
  const double ineq = std::max(0.0, -slot.apply_a(offset).minCoeff());
  return std::max(eq, ineq);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline PrecodeResult finish(Scheme scheme, const SlotProblem& slot, VectorXd u, VectorXd delta,
                            Clock::time_point start) {
  PrecodeResult r;
  r.elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start);
  r.scheme = scheme;
  r.power = u.squaredNorm();
  r.ci_residual = ci_residual(slot, u, delta);
  r.kkt = verify_kkt(slot, delta);
  r.u = std::move(u);
  r.delta = std::move(delta);
  return r;
}

}  // namespace detail

/// Zero-forcing: u = H^+ Sigma Gamma^{1/2} x, delta = 0.
inline VectorXd zfbf_vector(const MatrixXd& pinv, const VectorXd& target) { return pinv * target; }

inline PrecodeResult zfbf(const SlotProblem& slot) {
  const auto start = detail::Clock::now();
  VectorXd u = zfbf_vector(slot.channel->pinv(), slot.target);
  return detail::finish(Scheme::ZFBF, slot, std::move(u), VectorXd::Zero(slot.v.size()), start);
}

/// Presumed inactive set {l : v_l < 0}; entries with |v_l| <= kZeroV count as active.
inline std::vector<bool> predicted_inactive(const VectorXd& v) {
  std::vector<bool> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index l = 0; l < v.size(); ++l) out[static_cast<std::size_t>(l)] = v(l) < -kZeroV;
  return out;
}

/// Closed-form slack: solve the system Q' delta' = -v' punctured to the
/// presumed inactive set, clip at zero, scatter zeros elsewhere.
inline VectorXd cf_slp_delta(const MatrixXd& Q, const VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index l = 0; l < n; ++l)
    if (v(l) < -kZeroV) keep.push_back(l);

  VectorXd delta = VectorXd::Zero(n);
  const auto L = static_cast<Eigen::Index>(keep.size());
  if (L == 0) return delta;

  MatrixXd q_sub(L, L);
  VectorXd rhs(L);
  for (Eigen::Index r = 0; r < L; ++r) {
    rhs(r) = -v(keep[r]);
    for (Eigen::Index c = 0; c < L; ++c) q_sub(r, c) = Q(keep[r], keep[c]);
  }
  const Eigen::LLT<MatrixXd> llt(q_sub);
  if (llt.info() != Eigen::Success) throw std::runtime_error("punctured Q is not positive definite");
  const VectorXd sol = llt.solve(rhs);
  for (Eigen::Index r = 0; r < L; ++r) delta(keep[r]) = std::max(sol(r), 0.0);
  return delta;
}

inline PrecodeResult cf_slp(const SlotProblem& slot) {
  const auto start = detail::Clock::now();
  VectorXd delta = cf_slp_delta(slot.Q, slot.v);
  VectorXd u = slot.u_zf + slot.C * delta;
  return detail::finish(Scheme::CF_SLP, slot, std::move(u), std::move(delta), start);
}

/// Optimal slack by NNLS on ||C delta - (-u_zf)||^2.
inline PrecodeResult opt_slp(const SlotProblem& slot, double tol = 0.0) {
  const auto start = detail::Clock::now();
  NnlsProblem p{slot.C, -slot.u_zf, tol};
  NnlsSolution sol = nnls_solve(p);
  VectorXd u = slot.u_zf + slot.C * sol.delta;
  PrecodeResult r = detail::finish(Scheme::OPT_SLP, slot, std::move(u), std::move(sol.delta), start);
  r.solver_capped = sol.status == NnlsStatus::IterationCap;
  return r;
}

inline PrecodeResult precode(Scheme scheme, const SlotProblem& slot) {
  switch (scheme) {
    case Scheme::ZFBF: return zfbf(slot);
    case Scheme::CF_SLP: return cf_slp(slot);
    case Scheme::OPT_SLP: return opt_slp(slot);
  }
  throw std::invalid_argument("unknown scheme");
}

/// Round-off guard for declaring an optimal slack entry inactive.
inline double active_tolerance(const VectorXd& v) { return 1e-7 * (1.0 + v.norm()); }

inline std::vector<bool> optimal_inactive(const VectorXd& delta, double act_tol) {
  std::vector<bool> out(static_cast<std::size_t>(delta.size()));
  for (Eigen::Index l = 0; l < delta.size(); ++l) out[static_cast<std::size_t>(l)] = delta(l) > act_tol;
  return out;
}

/// Fraction of indices on which the predicted and optimal inactive sets agree.
inline double active_set_accuracy(const std::vector<bool>& predicted, const std::vector<bool>& optimal) {
  if (predicted.size() != optimal.size() || predicted.empty()) {
    throw std::invalid_argument("active-set masks must be non-empty and of equal length");
  }
  std::size_t hits = 0;
  for (std::size_t l = 0; l < predicted.size(); ++l) hits += predicted[l] == optimal[l];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

/// Noise-free received points (Re, Im) per user: H u.
inline VectorXd received(const SlotProblem& slot, const VectorXd& u) { return slot.channel->lifted() * u; }

}  // namespace slp
