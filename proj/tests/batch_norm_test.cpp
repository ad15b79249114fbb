#include <gtest/gtest.h>

#include <cmath>

#include "fedtan/nn/batch_norm.hpp"
#include "support/oracles.hpp"

using namespace fedtan;
using namespace fedtan::nn;

namespace {

BnCache cache_of(const Matrix& y, const BnForwardResult& f) { return {y, f.normalized, f.stats}; }

// Loss = sum of squared BN outputs; d_output = 2 X.
double squared_output_loss(const Matrix& y, const BnLayerParams& p, const std::optional<BnStats>& s = {}) {
  return bn_forward(y, p, s).output.squaredNorm();
}

}  // namespace

TEST(BatchNormForward, SymmetricTwoPointBatch) {
  Matrix y(2, 1);
  y << -1.0, 1.0;
  const auto f = bn_forward(y, BnLayerParams::identity(1));
  EXPECT_DOUBLE_EQ(f.stats.mean(0), 0.0);
  EXPECT_DOUBLE_EQ(f.stats.variance(0), 1.0);
  const double expected = 1.0 / std::sqrt(1.00001);
  EXPECT_NEAR(f.output(0, 0), -expected, 1e-15);
  EXPECT_NEAR(f.output(1, 0), expected, 1e-15);
  EXPECT_NEAR(expected, 0.9999950, 1e-7);
}

TEST(BatchNormForward, ConstantColumnGivesBeta) {
  Matrix y = Matrix::Constant(3, 1, 4.25);
  BnLayerParams p = BnLayerParams::identity(1);
  p.gamma(0) = 3.0;
  p.beta(0) = -0.5;
  const auto f = bn_forward(y, p);
  EXPECT_DOUBLE_EQ(f.stats.mean(0), 4.25);
  EXPECT_DOUBLE_EQ(f.stats.variance(0), 0.0);
  for (Index r = 0; r < 3; ++r) {
    EXPECT_DOUBLE_EQ(f.normalized(r, 0), 0.0);
    EXPECT_DOUBLE_EQ(f.output(r, 0), -0.5);
  }
}

TEST(BatchNormForward, StatsMatchTwoPassOracle) {
  const Matrix y = oracle::random_matrix(4, 3, 11);
  const auto f = bn_forward(y, BnLayerParams::identity(3));
  EXPECT_LT((f.stats.mean - oracle::column_mean(y)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((f.stats.variance - oracle::column_variance(y)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BatchNormForward, OutputMatchesLoopOracle) {
  const Matrix y = oracle::random_matrix(6, 4, 12);
  BnLayerParams p = BnLayerParams::identity(4);
  p.gamma << 0.5, 1.5, -2.0, 1.0;
  p.beta << 0.1, -0.2, 0.3, 0.0;
  const auto f = bn_forward(y, p);
  EXPECT_LT((f.output - oracle::batch_norm(y, p.gamma, p.beta, p.epsilon)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(BatchNormForward, OverrideUsedVerbatim) {
  const Matrix y = oracle::random_matrix(5, 2, 13);
  BnStats s{Vector::Constant(2, 0.25), Vector::Constant(2, 4.0)};
  const auto f = bn_forward(y, BnLayerParams::identity(2), s);
  EXPECT_EQ(f.stats.mean, s.mean);
  EXPECT_EQ(f.stats.variance, s.variance);
  EXPECT_NEAR(f.output(0, 1), (y(0, 1) - 0.25) / std::sqrt(4.0 + 1e-5), 1e-15);
}

TEST(BatchNormForward, NormalizedMomentsInvariant) {
  const Matrix y = oracle::random_matrix(16, 5, 14, 3.0);
  const auto f = bn_forward(y, BnLayerParams::identity(5));
  const Vector m = oracle::column_mean(f.normalized);
  const Vector v = oracle::column_variance(f.normalized);
  for (Index c = 0; c < 5; ++c) {
    EXPECT_LT(std::abs(m(c)), 1e-12);
    const double expected = f.stats.variance(c) / (f.stats.variance(c) + 1e-5);
    EXPECT_LT(std::abs(v(c) - expected) / expected, 1e-10);
  }
}

TEST(BatchNormForward, RejectsBadShapes) {
  EXPECT_THROW(bn_forward(Matrix(0, 3), BnLayerParams::identity(3)), SizeError);
  EXPECT_THROW(bn_forward(Matrix::Zero(2, 3), BnLayerParams::identity(4)), SizeError);
  BnStats wrong{Vector::Zero(2), Vector::Ones(2)};
  EXPECT_THROW(bn_forward(Matrix::Zero(2, 3), BnLayerParams::identity(3), wrong), SizeError);
  BnLayerParams bad = BnLayerParams::identity(3);
  bad.epsilon = 0.0;
  EXPECT_THROW(bn_forward(Matrix::Zero(2, 3), bad), std::invalid_argument);
}

TEST(BatchNormBackward, ZeroCotangentGivesZeros) {
  const Matrix y = oracle::random_matrix(4, 3, 15);
  const auto p = BnLayerParams::identity(3);
  const auto f = bn_forward(y, p);
  const auto g = bn_backward(Matrix::Zero(4, 3), cache_of(y, f), p);
  EXPECT_EQ(g.d_input.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.d_gamma.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.d_beta.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.stat_grads.d_mean.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.stat_grads.d_variance.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BatchNormBackward, InputGradientMatchesFiniteDifferences) {
  const Matrix y = oracle::random_matrix(8, 5, 16);
  BnLayerParams p = BnLayerParams::identity(5);
  p.gamma << 1.2, 0.7, -0.4, 2.0, 1.0;
  p.beta << 0.3, 0.0, -0.1, 0.5, 0.2;
  const auto f = bn_forward(y, p);
  const auto g = bn_backward(2.0 * f.output, cache_of(y, f), p);
  double worst = 0.0;
  for (Index r = 0; r < y.rows(); ++r)
    for (Index c = 0; c < y.cols(); ++c) {
      const double numeric = oracle::central_difference(
          [&](double v) {
            Matrix z = y;
            z(r, c) = v;
            return squared_output_loss(z, p);
          },
          y(r, c), 1e-5);
      worst = std::max(worst, oracle::relative_error(g.d_input(r, c), numeric));
    }
  EXPECT_LT(worst, 1e-4);
}

TEST(BatchNormBackward, AffineGradientsMatchFiniteDifferences) {
  const Matrix y = oracle::random_matrix(8, 3, 17);
  BnLayerParams p = BnLayerParams::identity(3);
  p.gamma << 0.9, 1.1, -0.6;
  const auto f = bn_forward(y, p);
  const auto g = bn_backward(2.0 * f.output, cache_of(y, f), p);
  for (Index c = 0; c < 3; ++c) {
    const double dg = oracle::central_difference(
        [&](double v) {
          BnLayerParams q = p;
          q.gamma(c) = v;
          return squared_output_loss(y, q);
        },
        p.gamma(c), 1e-5);
    const double db = oracle::central_difference(
        [&](double v) {
          BnLayerParams q = p;
          q.beta(c) = v;
          return squared_output_loss(y, q);
        },
        p.beta(c), 1e-5);
    EXPECT_LT(oracle::relative_error(g.d_gamma(c), dg), 1e-6);
    EXPECT_LT(oracle::relative_error(g.d_beta(c), db), 1e-6);
  }
}

TEST(BatchNormBackward, StatGradsMatchFiniteDifferencesThroughOverride) {
  const Matrix y = oracle::random_matrix(8, 5, 18);
  BnLayerParams p = BnLayerParams::identity(5);
  p.gamma << 1.0, -0.5, 0.8, 1.5, 0.3;
  const auto f = bn_forward(y, p);
  const auto g = bn_backward(2.0 * f.output, cache_of(y, f), p);
  for (Index c = 0; c < 5; ++c) {
    const double dm = oracle::central_difference(
        [&](double v) {
          BnStats s = f.stats;
          s.mean(c) = v;
          return squared_output_loss(y, p, s);
        },
        f.stats.mean(c), 1e-5);
    const double dv = oracle::central_difference(
        [&](double v) {
          BnStats s = f.stats;
          s.variance(c) = v;
          return squared_output_loss(y, p, s);
        },
        f.stats.variance(c), 1e-6);
    EXPECT_LT(oracle::relative_error(g.stat_grads.d_mean(c), dm), 1e-4);
    EXPECT_LT(oracle::relative_error(g.stat_grads.d_variance(c), dv), 1e-4);
  }
}

TEST(BatchNormBackward, OverrideWithOwnValuesIsBitwiseNeutral) {
  const Matrix y = oracle::random_matrix(6, 4, 19);
  const auto p = BnLayerParams::identity(4);
  const auto f = bn_forward(y, p);
  const Matrix d = oracle::random_matrix(6, 4, 20);
  const auto plain = bn_backward(d, cache_of(y, f), p);
  const auto same = bn_backward(d, cache_of(y, f), p, plain.stat_grads);
  EXPECT_EQ(plain.d_input, same.d_input);
  const auto refwd = bn_forward(y, p, f.stats);
  EXPECT_EQ(refwd.output, f.output);
}

TEST(BatchNormBackward, OverrideReplacesStatGradPaths) {
  const Matrix y = oracle::random_matrix(6, 2, 21);
  const auto p = BnLayerParams::identity(2);
  const auto f = bn_forward(y, p);
  const Matrix d = oracle::random_matrix(6, 2, 22);
  BnStatGrads injected{Vector::Constant(2, 0.3), Vector::Constant(2, -0.7)};
  const auto g = bn_backward(d, cache_of(y, f), p, injected);
  EXPECT_EQ(g.stat_grads.d_mean, injected.d_mean);
  EXPECT_EQ(g.stat_grads.d_variance, injected.d_variance);
  const double inv = 1.0 / std::sqrt(f.stats.variance(1) + p.epsilon);
  const double expected = d(2, 1) * inv + (-0.7) * 2.0 * (y(2, 1) - f.stats.mean(1)) / 6.0 + 0.3 / 6.0;
  EXPECT_NEAR(g.d_input(2, 1), expected, 1e-14);
}

TEST(BatchNormBackward, ZeroVarianceStaysFinite) {
  const Matrix y = Matrix::Constant(4, 2, 1.5);
  const auto p = BnLayerParams::identity(2, 1e-8);
  const auto f = bn_forward(y, p);
  const auto g = bn_backward(oracle::random_matrix(4, 2, 23), cache_of(y, f), p);
  EXPECT_TRUE(f.output.allFinite());
  EXPECT_TRUE(g.d_input.allFinite());
  EXPECT_TRUE(g.stat_grads.d_mean.allFinite());
  EXPECT_TRUE(g.stat_grads.d_variance.allFinite());
}

TEST(BatchNormBackward, RejectsMismatchedCache) {
  const Matrix y = oracle::random_matrix(4, 3, 24);
  const auto p = BnLayerParams::identity(3);
  const auto f = bn_forward(y, p);
  EXPECT_THROW(bn_backward(Matrix::Zero(5, 3), cache_of(y, f), p), SizeError);
  EXPECT_THROW(bn_backward(Matrix::Zero(4, 3), cache_of(y, f), BnLayerParams::identity(2)), SizeError);
}
