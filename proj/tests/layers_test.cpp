#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedtan/nn/activation.hpp"
#include "fedtan/nn/dense.hpp"
#include "support/oracles.hpp"

using namespace fedtan;
using namespace fedtan::nn;

TEST(Dense, IdentityWeightsPassInputThrough) {
  const Matrix x = oracle::random_matrix(3, 4, 1);
  const DenseLayerParams p{Matrix::Identity(4, 4), Vector::Zero(4)};
  EXPECT_EQ(dense_forward(x, p), x);
}

TEST(Dense, ZeroWeightsGiveBiasRows) {
  Vector b(3);
  b << 1.0, -2.0, 0.5;
  const DenseLayerParams p{Matrix::Zero(3, 2), b};
  const Matrix out = dense_forward(oracle::random_matrix(4, 2, 2), p);
  for (Index r = 0; r < 4; ++r) EXPECT_EQ(Vector(out.row(r).transpose()), b);
}

TEST(Dense, MatchesTripleLoop) {
  const Matrix x = oracle::random_matrix(2, 3, 3);
  Matrix w(4, 3);
  w << 1, 2, 3, -1, 0, 4, 0.5, 0.25, -2, 7, -3, 1;
  Vector b(4);
  b << 0.1, 0.2, 0.3, 0.4;
  const Matrix got = dense_forward(x, {w, b});
  Matrix expected = oracle::matmul_transposed(x, w);
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 4; ++c) expected(r, c) += b(c);
  EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Dense, BackwardZeroCotangent) {
  const Matrix x = oracle::random_matrix(3, 2, 4);
  const DenseLayerParams p{oracle::random_matrix(5, 2, 5), Vector::Zero(5)};
  const auto g = dense_backward(Matrix::Zero(3, 5), x, p);
  EXPECT_EQ(g.d_input.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.d_weights.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.d_bias.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dense, BackwardIdentitySingleSample) {
  const Matrix x = oracle::random_matrix(1, 3, 6);
  const DenseLayerParams p{Matrix::Identity(3, 3), Vector::Zero(3)};
  const Matrix d = oracle::random_matrix(1, 3, 7);
  EXPECT_EQ(dense_backward(d, x, p).d_input, d);
}

TEST(Dense, BackwardMatchesFiniteDifferences) {
  const Matrix x = oracle::random_matrix(4, 3, 8);
  DenseLayerParams p{oracle::random_matrix(2, 3, 9), oracle::random_matrix(2, 1, 10).col(0)};
  const Matrix target = oracle::random_matrix(4, 2, 11);
  auto loss = [&](const Matrix& in, const DenseLayerParams& q) {
    return 0.5 * (dense_forward(in, q) - target).squaredNorm();
  };
  const auto g = dense_backward(dense_forward(x, p) - target, x, p);
  double worst = 0.0;
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 3; ++c) {
      const double n = oracle::central_difference(
          [&](double v) {
            auto q = p;
            q.weights(r, c) = v;
            return loss(x, q);
          },
          p.weights(r, c), 1e-5);
      worst = std::max(worst, oracle::relative_error(g.d_weights(r, c), n));
    }
  for (Index r = 0; r < 2; ++r) {
    const double n = oracle::central_difference(
        [&](double v) {
          auto q = p;
          q.bias(r) = v;
          return loss(x, q);
        },
        p.bias(r), 1e-5);
    worst = std::max(worst, oracle::relative_error(g.d_bias(r), n));
  }
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 3; ++c) {
      const double n = oracle::central_difference(
          [&](double v) {
            Matrix z = x;
            z(r, c) = v;
            return loss(z, p);
          },
          x(r, c), 1e-5);
      worst = std::max(worst, oracle::relative_error(g.d_input(r, c), n));
    }
  EXPECT_LT(worst, 1e-4);
}

TEST(Dense, RejectsMismatch) {
  const DenseLayerParams p{Matrix::Zero(2, 3), Vector::Zero(2)};
  EXPECT_THROW(dense_forward(Matrix::Zero(1, 4), p), SizeError);
  EXPECT_THROW(dense_backward(Matrix::Zero(1, 3), Matrix::Zero(1, 3), p), SizeError);
}

TEST(Dense, UniformInitWithinFanInBound) {
  std::mt19937_64 rng(3);
  const auto p = DenseLayerParams::uniform_init(16, 5, rng);
  EXPECT_EQ(p.weights.rows(), 5);
  EXPECT_EQ(p.weights.cols(), 16);
  EXPECT_LE(p.weights.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_LE(p.bias.cwiseAbs().maxCoeff(), 0.25);
}

TEST(Activation, ReluAndTanh) {
  Matrix x(1, 4);
  x << -2.0, -0.0, 0.5, 3.0;
  Matrix d = Matrix::Ones(1, 4);
  const Matrix r = relu_forward(x);
  EXPECT_EQ(r(0, 0), 0.0);
  EXPECT_EQ(r(0, 3), 3.0);
  const Matrix dr = relu_backward(d, x);
  EXPECT_EQ(dr(0, 0), 0.0);
  EXPECT_EQ(dr(0, 2), 1.0);
  const Matrix dt = tanh_backward(d, x);
  EXPECT_NEAR(dt(0, 2), 1.0 - std::tanh(0.5) * std::tanh(0.5), 1e-15);
  EXPECT_NEAR(tanh_forward(x)(0, 3), std::tanh(3.0), 1e-15);
}

TEST(Loss, UniformLogitsGiveLogK) {
  const Matrix logits = Matrix::Constant(3, 7, 0.4);
  const std::vector<int> labels{0, 3, 6};
  EXPECT_NEAR(softmax_cross_entropy(logits, labels).loss, std::log(7.0), 1e-14);
}

TEST(Loss, HugeMarginGivesZero) {
  Matrix logits = Matrix::Zero(2, 3);
  logits(0, 1) = 1000.0;
  logits(1, 2) = 1000.0;
  const std::vector<int> labels{1, 2};
  const auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, 0.0, 1e-300);
  EXPECT_LT(r.d_logits.cwiseAbs().maxCoeff(), 1e-300);
}

TEST(Loss, MatchesLogSumExpOracle) {
  const Matrix logits = oracle::random_matrix(3, 4, 12, 2.0);
  const std::vector<int> labels{2, 0, 3};
  EXPECT_NEAR(softmax_cross_entropy(logits, labels).loss, oracle::cross_entropy(logits, labels), 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const Matrix logits = oracle::random_matrix(3, 4, 13);
  const std::vector<int> labels{1, 1, 0};
  const auto r = softmax_cross_entropy(logits, labels);
  for (Index i = 0; i < 3; ++i)
    for (Index c = 0; c < 4; ++c) {
      const double n = oracle::central_difference(
          [&](double v) {
            Matrix z = logits;
            z(i, c) = v;
            return oracle::cross_entropy(z, labels);
          },
          logits(i, c), 1e-5);
      EXPECT_LT(oracle::relative_error(r.d_logits(i, c), n), 1e-6);
    }
}

TEST(Loss, RejectsOutOfRangeLabel) {
  const Matrix logits = Matrix::Zero(2, 3);
  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{0, 3}), LabelError);
  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{-1, 0}), LabelError);
}

TEST(Loss, ArgmaxTiesGoLow) {
  Matrix logits(1, 4);
  logits << 0.5, 2.0, 2.0, 1.0;
  EXPECT_EQ(argmax_row(logits, 0), 1);
}
