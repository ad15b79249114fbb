#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include "fedtan/tensor.hpp"

namespace fedtan::nn {

inline Matrix relu_forward(const Matrix& input) { return input.cwiseMax(0.0); }

inline Matrix relu_backward(const Matrix& d_output, const Matrix& input) {
  require_size(d_output.rows() == input.rows() && d_output.cols() == input.cols(),
               "relu backward: shape mismatch");
  return (input.array() > 0.0).select(d_output, 0.0);
}

inline Matrix tanh_forward(const Matrix& input) { return input.array().tanh().matrix(); }

inline Matrix tanh_backward(const Matrix& d_output, const Matrix& input) {
  require_size(d_output.rows() == input.rows() && d_output.cols() == input.cols(),
               "tanh backward: shape mismatch");
  return (d_output.array() * (1.0 - input.array().tanh().square())).matrix();
}

class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct LossResult {
  double loss = 0.0;
  Matrix d_logits;
};

// Mean-over-batch softmax cross-entropy. d_logits = (softmax - onehot) / B.
inline LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  require_size(logits.rows() >= 1, "cross entropy: empty batch");
  require_size(static_cast<Index>(labels.size()) == logits.rows(),
               "cross entropy: label count mismatch");
  const Index batch = logits.rows();
  const Index classes = logits.cols();

  LossResult out{0.0, Matrix(batch, classes)};
  for (Index b = 0; b < batch; ++b) {
    const int label = labels[static_cast<std::size_t>(b)];
    if (label < 0 || label >= classes)
      throw LabelError("cross entropy: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    const double peak = logits.row(b).maxCoeff();
    auto shifted = (logits.row(b).array() - peak).exp();
    const double sum = shifted.sum();
    out.loss += std::log(sum) + peak - logits(b, label);
    out.d_logits.row(b) = shifted / sum;
    out.d_logits(b, label) -= 1.0;
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  out.loss *= inv_batch;
  out.d_logits *= inv_batch;
  return out;
}

// Index of the largest logit; ties go to the lowest class index.
inline int argmax_row(const Matrix& logits, Index row) {
  int best = 0;
  for (Index c = 1; c < logits.cols(); ++c)
    if (logits(row, c) > logits(row, best)) best = static_cast<int>(c);
  return best;
}

}  // namespace fedtan::nn
