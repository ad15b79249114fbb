#pragma once

// Straightforward reference computations, written with plain loops and kept free of the
// library's own helpers.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fedtan/tensor.hpp"

namespace oracle {

using fedtan::Index;
using fedtan::Matrix;
using fedtan::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

// a (n x k) times b^T (m x k)
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  return out;
}

inline Vector column_mean(const Matrix& y) {
  Vector out(y.cols());
  for (Index c = 0; c < y.cols(); ++c) {
    double s = 0.0;
    for (Index r = 0; r < y.rows(); ++r) s += y(r, c);
    out(c) = s / static_cast<double>(y.rows());
  }
  return out;
}

inline Vector column_variance(const Matrix& y) {
  const Vector mean = column_mean(y);
  Vector out(y.cols());
  for (Index c = 0; c < y.cols(); ++c) {
    double s = 0.0;
    for (Index r = 0; r < y.rows(); ++r) s += (y(r, c) - mean(c)) * (y(r, c) - mean(c));
    out(c) = s / static_cast<double>(y.rows());
  }
  return out;
}

inline Matrix batch_norm(const Matrix& y, const Vector& gamma, const Vector& beta, double eps) {
  const Vector mean = column_mean(y);
  const Vector var = column_variance(y);
  Matrix out(y.rows(), y.cols());
  for (Index r = 0; r < y.rows(); ++r)
    for (Index c = 0; c < y.cols(); ++c)
      out(r, c) = gamma(c) * (y(r, c) - mean(c)) / std::sqrt(var(c) + eps) + beta(c);
  return out;
}

// Mean cross-entropy through log-sum-exp.
inline double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (Index r = 0; r < logits.rows(); ++r) {
    double top = logits(r, 0);
    for (Index c = 1; c < logits.cols(); ++c) top = std::max(top, logits(r, c));
    double s = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) s += std::exp(logits(r, c) - top);
    total += top + std::log(s) - logits(r, labels[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  const double gap = std::abs(a - b);
  if (gap <= 1e-8) return 0.0;
  return gap / std::max(std::abs(a), std::abs(b));
}

}  // namespace oracle
