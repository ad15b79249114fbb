#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fedtan {

// Batch-major storage: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Raised for any shape disagreement between tensors and parameters.
class SizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_size(bool ok, const std::string& what) {
  if (!ok) throw SizeError(what);
}

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Per-column mean over the batch dimension.
inline Vector column_mean(const Matrix& m) {
  return m.colwise().mean().transpose();
}

// Per-column population variance measured against an arbitrary centre.
inline Vector column_variance_about(const Matrix& m, const Vector& centre) {
  return (m.rowwise() - centre.transpose()).array().square().colwise().mean().transpose();
}

}  // namespace fedtan
