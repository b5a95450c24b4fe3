#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "slp/nnls.hpp"
#include "slp/rng.hpp"

namespace {

using slp::MatrixXd;
using slp::NnlsProblem;
using slp::NnlsStatus;
using slp::VectorXd;

NnlsProblem random_problem(slp::CounterRng& rng, int m, int n) {
  std::normal_distribution<double> g;
  NnlsProblem p;
  p.C.resize(m, n);
  p.d.resize(m);
  for (Eigen::Index i = 0; i < p.C.size(); ++i) p.C(i) = g(rng);
  for (Eigen::Index i = 0; i < m; ++i) p.d(i) = 3.0 * g(rng);
  return p;
}

TEST(Nnls, SeparableClip) {
  NnlsProblem p{MatrixXd::Identity(2, 2), VectorXd(2)};
  p.d << 1.0, -2.0;
  const auto s = slp::nnls_solve(p);
  EXPECT_EQ(s.status, NnlsStatus::Converged);
  EXPECT_DOUBLE_EQ(s.delta(0), 1.0);
  EXPECT_EQ(s.delta(1), 0.0);
  EXPECT_DOUBLE_EQ(s.objective, 4.0);
}

TEST(Nnls, AllActive) {
  NnlsProblem p{MatrixXd::Identity(2, 2), VectorXd::Constant(2, -1.0)};
  const auto s = slp::nnls_solve(p);
  EXPECT_TRUE(s.delta.isZero(0.0));
  EXPECT_GE(s.dual.minCoeff(), 0.0);
  EXPECT_EQ(s.iterations, 0);
}

TEST(Nnls, ScalarCases) {
  NnlsProblem p{MatrixXd::Constant(1, 1, 2.0), VectorXd::Constant(1, 3.0)};
  EXPECT_DOUBLE_EQ(slp::nnls_solve(p).delta(0), 1.5);
  EXPECT_DOUBLE_EQ(slp::nnls_oracle(p).delta(0), 1.5);
  p.d(0) = -3.0;
  EXPECT_EQ(slp::nnls_solve(p).delta(0), 0.0);
  EXPECT_EQ(slp::nnls_oracle(p).delta(0), 0.0);
}

TEST(Nnls, RejectsBadInput) {
  NnlsProblem p{MatrixXd::Identity(2, 2), VectorXd::Zero(2)};
  p.d(0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(slp::nnls_solve(p), std::invalid_argument);
  NnlsProblem wide{MatrixXd::Ones(2, 3), VectorXd::Zero(2)};
  EXPECT_THROW(slp::nnls_solve(wide), std::invalid_argument);
  NnlsProblem mismatch{MatrixXd::Identity(2, 2), VectorXd::Zero(3)};
  EXPECT_THROW(slp::nnls_solve(mismatch), std::invalid_argument);
}

TEST(Nnls, OracleRefusesLargeProblems) {
  slp::CounterRng rng(1);
  EXPECT_THROW(slp::nnls_oracle(random_problem(rng, 14, 13)), std::invalid_argument);
}

TEST(Nnls, IterationCapIsFlagged) {
  slp::CounterRng rng(2);
  // Find an instance needing more than one outer iteration, then cap it at one.
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_problem(rng, 8, 6);
    if (slp::nnls_solve(p).iterations < 2) continue;
    p.max_iter = 1;
    const auto capped = slp::nnls_solve(p);
    EXPECT_EQ(capped.status, NnlsStatus::IterationCap);
    EXPECT_EQ(capped.iterations, 1);
    EXPECT_GE(capped.delta.minCoeff(), 0.0);
    return;
  }
  FAIL() << "no multi-iteration instance found";
}

TEST(Nnls, RandomSixByThreeMatchesOracle) {
  slp::CounterRng rng(63);
  const auto p = random_problem(rng, 6, 3);
  const auto s = slp::nnls_solve(p);
  const auto o = slp::nnls_oracle(p);
  EXPECT_LT((s.delta - o.delta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(NnlsProperty, AgreesWithOracleAndCertifiesOptimality) {
  slp::CounterRng rng(2026);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 8;
    const int m = n + static_cast<int>(rng() % 5);
    auto p = random_problem(rng, m, n);
    p.record_history = true;
    const auto s = slp::nnls_solve(p);
    const auto o = slp::nnls_oracle(p);
    ASSERT_EQ(s.status, NnlsStatus::Converged);
    ASSERT_LT((s.delta - o.delta).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
    ASSERT_NEAR(s.objective, o.objective, 1e-10 * (1.0 + o.objective)) << "trial " << trial;

    const double tol = 1e-9 * (1.0 + p.d.squaredNorm());
    EXPECT_GE(s.delta.minCoeff(), 0.0);
    EXPECT_GE(s.dual.minCoeff(), -2.0 * tol);
    EXPECT_LE(s.dual.cwiseProduct(s.delta).cwiseAbs().sum(), tol * (1.0 + p.d.squaredNorm()));
    for (std::size_t i = 1; i < s.history.size(); ++i) {
      EXPECT_LE(s.history[i], s.history[i - 1] + 1e-12 * (1.0 + s.history[i - 1]));
    }

    const VectorXd grad0 = -2.0 * p.C.transpose() * p.d;
    EXPECT_EQ(s.delta.isZero(0.0), grad0.minCoeff() >= -2.0 * tol) << "trial " << trial;
  }
}

}  // namespace
