#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace slp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class NnlsStatus { Converged, IterationCap };

/// min ||C delta - d||^2  s.t.  delta >= 0, with C of full column rank.
///
/// A non-positive tol or max_iter selects the default:
/// tol = 1e-9 * (1 + ||d||^2), max_iter = 10 * n.
struct NnlsProblem {
  MatrixXd C;
  VectorXd d;
  double tol = 0.0;
  int max_iter = 0;
  bool record_history = false;
};

struct NnlsSolution {
  VectorXd delta;   // >= 0, active entries are exact zeros
  double objective = 0.0;
  VectorXd dual;    // gradient 2 C^T (C delta - d)
  int iterations = 0;
  NnlsStatus status = NnlsStatus::Converged;
  std::vector<double> history;  // objective after each outer iteration, if requested
};

namespace detail {

inline void validate(const NnlsProblem& p) {
  if (p.C.rows() != p.d.size()) {
    throw std::invalid_argument("NNLS: C has " + std::to_string(p.C.rows()) + " rows but d has " +
                                std::to_string(p.d.size()) + " entries");
  }
  if (p.C.cols() == 0) throw std::invalid_argument("NNLS: empty problem");
  if (p.C.cols() > p.C.rows()) {
    throw std::invalid_argument("NNLS: C must have full column rank (n <= m)");
  }
  if (!p.C.allFinite() || !p.d.allFinite()) throw std::invalid_argument("NNLS: non-finite input");
}

inline double default_tol(const NnlsProblem& p) {
  return p.tol > 0.0 ? p.tol : 1e-9 * (1.0 + p.d.squaredNorm());
}

/// Solves the normal equations restricted to `passive`, zeros elsewhere.
/// Returns false if the restricted Gram matrix is not positive definite.
inline bool solve_restricted(const MatrixXd& gram, const VectorXd& rhs,
                             const std::vector<int>& passive, VectorXd& out) {
  const auto p = static_cast<Eigen::Index>(passive.size());
  out.setZero(gram.rows());
  if (p == 0) return true;
  MatrixXd sub(p, p);
  VectorXd b(p);
  for (Eigen::Index r = 0; r < p; ++r) {
    b(r) = rhs(passive[r]);
    for (Eigen::Index c = 0; c < p; ++c) sub(r, c) = gram(passive[r], passive[c]);
  }
  const Eigen::LLT<MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success) return false;
  const VectorXd z = llt.solve(b);
  for (Eigen::Index r = 0; r < p; ++r) out(passive[r]) = z(r);
  return true;
}

}  // namespace detail

/// Lawson-Hanson active-set NNLS.
///
/// The passive set P holds the free variables; each outer iteration admits
/// the variable with the largest positive negative-gradient entry, and the
/// inner loop steps back toward the feasible iterate until the restricted
/// least-squares solution is strictly positive on P. Ties are broken by
/// lowest index.
inline NnlsSolution nnls_solve(const NnlsProblem& problem) {
  detail::validate(problem);
  const auto n = problem.C.cols();
  const double tol = detail::default_tol(problem);
  const int max_iter = problem.max_iter > 0 ? problem.max_iter : static_cast<int>(10 * n);

  const MatrixXd gram = problem.C.transpose() * problem.C;
  const VectorXd ctd = problem.C.transpose() * problem.d;

  VectorXd x = VectorXd::Zero(n);
  VectorXd z(n);
  std::vector<char> in_passive(n, 0);
  std::vector<char> rejected(n, 0);
  std::vector<int> passive;
  passive.reserve(n);

  auto rebuild_passive = [&] {
    passive.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (in_passive[j]) passive.push_back(static_cast<int>(j));
  };
  auto objective_of = [&](const VectorXd& v) { return (problem.C * v - problem.d).squaredNorm(); };

  NnlsSolution sol;
  sol.status = NnlsStatus::IterationCap;
  VectorXd w = ctd;  // C^T (d - C x) at x = 0

  int iter = 0;
  while (iter < max_iter) {
    Eigen::Index t = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!in_passive[j] && !rejected[j] && w(j) > best) {
        best = w(j);
        t = j;
      }
    }
    if (t < 0) {
      sol.status = NnlsStatus::Converged;
      break;
    }
    ++iter;
    in_passive[t] = 1;
    rebuild_passive();

    bool first = true;
    for (;;) {
      if (!detail::solve_restricted(gram, ctd, passive, z)) {
        throw std::runtime_error("NNLS: restricted Gram matrix is not positive definite");
      }
      if (first && z(t) <= 0.0) {
        // Round-off admitted a variable that cannot move; skip it until x changes.
        in_passive[t] = 0;
        rejected[t] = 1;
        rebuild_passive();
        break;
      }
      first = false;

      bool all_positive = true;
      for (int j : passive) all_positive = all_positive && z(j) > 0.0;
      if (all_positive) {
        x = z;
        std::fill(rejected.begin(), rejected.end(), 0);
        break;
      }

      double alpha = std::numeric_limits<double>::infinity();
      int blocking = -1;
      for (int j : passive) {
        if (z(j) <= 0.0) {
          const double gap = x(j) - z(j);
          const double ratio = gap > 0.0 ? x(j) / gap : 0.0;
          if (ratio < alpha) {
            alpha = ratio;
            blocking = j;
          }
        }
      }
      x += alpha * (z - x);
      x(blocking) = 0.0;
      for (int j : passive) {
        if (x(j) <= 0.0) {
          x(j) = 0.0;
          in_passive[j] = 0;
        }
      }
      rebuild_passive();
      std::fill(rejected.begin(), rejected.end(), 0);
    }

    for (Eigen::Index j = 0; j < n; ++j)
      if (!in_passive[j]) x(j) = 0.0;
    w.noalias() = ctd - gram * x;
    if (problem.record_history) sol.history.push_back(objective_of(x));
  }
  if (sol.status != NnlsStatus::Converged) {
    // The cap may coincide with the last admissible step.
    bool any = false;
    for (Eigen::Index j = 0; j < n; ++j) any = any || (!in_passive[j] && !rejected[j] && w(j) > tol);
    if (!any) sol.status = NnlsStatus::Converged;
  }

  sol.delta = std::move(x);
  sol.objective = objective_of(sol.delta);
  sol.dual = -2.0 * w;
  sol.iterations = iter;
  return sol;
}

/// Reference solver: enumerates all 2^n passive sets, solves each restricted
/// least-squares problem by QR on the selected columns of C, and keeps the
/// best candidate that is primal and dual feasible. Refuses n > 12.
inline NnlsSolution nnls_oracle(const NnlsProblem& problem) {
  detail::validate(problem);
  const auto n = problem.C.cols();
  if (n > 12) throw std::invalid_argument("NNLS oracle refuses n > 12 (got " + std::to_string(n) + ")");
  const double tol = detail::default_tol(problem);

  NnlsSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  NnlsSolution fallback = best;  // primal feasible only

  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> cols;
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask & (1u << j)) cols.push_back(static_cast<int>(j));
    VectorXd cand = VectorXd::Zero(n);
    if (!cols.empty()) {
      MatrixXd sub(problem.C.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = problem.C.col(cols[c]);
      const VectorXd zs = sub.colPivHouseholderQr().solve(problem.d);
      bool feasible = true;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        feasible = feasible && zs(static_cast<Eigen::Index>(c)) >= 0.0;
        cand(cols[c]) = zs(static_cast<Eigen::Index>(c));
      }
      if (!feasible) continue;
    }
    const VectorXd resid = problem.C * cand - problem.d;
    const double obj = resid.squaredNorm();
    const VectorXd grad = 2.0 * problem.C.transpose() * resid;
    bool dual_ok = true;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!(mask & (1u << j))) dual_ok = dual_ok && grad(j) >= -2.0 * tol;
    NnlsSolution& slot = dual_ok ? best : fallback;
    if (obj < slot.objective) {
      slot.delta = cand;
      slot.objective = obj;
      slot.dual = grad;
    }
  }
  NnlsSolution out = std::isfinite(best.objective) ? best : fallback;
  out.iterations = 1 << n;
  out.status = NnlsStatus::Converged;
  return out;
}

}  // namespace slp
