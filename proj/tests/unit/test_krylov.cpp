#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "mmwg/krylov.hpp"

using namespace mmwg;

namespace {

Eigen::MatrixXd random_spd(int n, std::uint64_t seed, const Eigen::VectorXd& spectrum) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = nd(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
  const Eigen::MatrixXd u = qr.householderQ();
  return u * spectrum.asDiagonal() * u.transpose();
}

}  // namespace

TEST(BlockLanczos, MatchesDenseSolver) {
  const int n = 300;
  Eigen::VectorXd spec(n);
  for (int i = 0; i < n; ++i) spec[i] = 1.0 / (1.0 + i * 0.37);
  const Eigen::MatrixXd a = random_spd(n, 3, spec);
  const BlockOperator op = [&a](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) { out = a * in; };
  const KrylovResult r = block_lanczos_largest(op, n, 12, 0.0);
  ASSERT_EQ(r.values.size(), 12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense(a);
  for (int k = 0; k < 12; ++k) {
    EXPECT_NEAR(r.values[k], dense.eigenvalues()[n - 1 - k], 1e-10);
    const Eigen::VectorXd res = a * r.vectors.col(k) - r.values[k] * r.vectors.col(k);
    EXPECT_LT(res.norm(), 1e-8);
  }
  const Eigen::MatrixXd gram = r.vectors.transpose() * r.vectors;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BlockLanczos, ThresholdSelectsEigenvaluesAbove) {
  const int n = 200;
  Eigen::VectorXd spec(n);
  for (int i = 0; i < n; ++i) spec[i] = 10.0 - 0.05 * i;
  const Eigen::MatrixXd a = random_spd(n, 5, spec);
  const BlockOperator op = [&a](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) { out = a * in; };
  const KrylovResult r = block_lanczos_largest(op, n, 100, 9.62);
  // 10, 9.95, ..., 9.65 are above the threshold.
  ASSERT_EQ(r.values.size(), 8);
  EXPECT_NEAR(r.values[7], 9.65, 1e-9);
}

TEST(BlockLanczos, RecoversExactDegeneracy) {
  const int n = 150;
  Eigen::VectorXd spec(n);
  for (int i = 0; i < n; ++i) spec[i] = 0.5 + 0.001 * i;
  spec[0] = spec[1] = spec[2] = 5.0;
  spec[3] = 4.0;
  const Eigen::MatrixXd a = random_spd(n, 9, spec);
  const BlockOperator op = [&a](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) { out = a * in; };
  const KrylovResult r = block_lanczos_largest(op, n, 4, 3.0);
  ASSERT_EQ(r.values.size(), 4);
  EXPECT_NEAR(r.values[0], 5.0, 1e-10);
  EXPECT_NEAR(r.values[2], 5.0, 1e-10);
  EXPECT_NEAR(r.values[3], 4.0, 1e-10);
}

TEST(BlockLanczos, DeterministicForFixedSeed) {
  const int n = 120;
  Eigen::VectorXd spec = Eigen::VectorXd::LinSpaced(n, 0.1, 3.0);
  const Eigen::MatrixXd a = random_spd(n, 1, spec);
  const BlockOperator op = [&a](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) { out = a * in; };
  const auto r1 = block_lanczos_largest(op, n, 5, 0.0);
  const auto r2 = block_lanczos_largest(op, n, 5, 0.0);
  EXPECT_EQ(r1.values, r2.values);
  EXPECT_EQ(r1.vectors, r2.vectors);
}

TEST(BlockLanczos, CapReachedThrows) {
  const int n = 400;
  Eigen::VectorXd spec(n);
  for (int i = 0; i < n; ++i) spec[i] = 1.0 - 1e-7 * i;
  const Eigen::MatrixXd a = random_spd(n, 2, spec);
  const BlockOperator op = [&a](const Eigen::MatrixXd& in, Eigen::MatrixXd& out) { out = a * in; };
  KrylovOptions opt;
  opt.max_dimension = 16;
  EXPECT_THROW(block_lanczos_largest(op, n, 6, 0.0, opt), NumericalError);
}
