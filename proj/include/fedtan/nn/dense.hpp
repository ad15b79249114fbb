#pragma once

#include <cmath>
#include <random>

#include "fedtan/tensor.hpp"

namespace fedtan::nn {

struct DenseLayerParams {
  Matrix weights;  // out x in
  Vector bias;     // out

  Index inputs() const { return weights.cols(); }
  Index outputs() const { return weights.rows(); }

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for both weights and bias.
  template <class Rng>
  static DenseLayerParams uniform_init(Index in, Index out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayerParams p{Matrix(out, in), Vector(out)};
    for (Index r = 0; r < out; ++r)
      for (Index c = 0; c < in; ++c) p.weights(r, c) = dist(rng);
    for (Index r = 0; r < out; ++r) p.bias(r) = dist(rng);
    return p;
  }
};

struct DenseBackwardResult {
  Matrix d_input;
  Matrix d_weights;
  Vector d_bias;
};

inline Matrix dense_forward(const Matrix& input, const DenseLayerParams& params) {
  require_size(params.bias.size() == params.outputs(), "dense: bias length mismatch");
  require_size(input.cols() == params.inputs(),
               "dense: input " + shape_str(input) + " vs weights " + shape_str(params.weights));
  Matrix out = input * params.weights.transpose();
  out.rowwise() += params.bias.transpose();
  return out;
}

inline DenseBackwardResult dense_backward(const Matrix& d_output, const Matrix& input,
                                          const DenseLayerParams& params) {
  require_size(d_output.rows() == input.rows() && d_output.cols() == params.outputs() &&
                   input.cols() == params.inputs(),
               "dense backward: dimension mismatch");
  return {d_output * params.weights, d_output.transpose() * input,
          d_output.colwise().sum().transpose()};
}

}  // namespace fedtan::nn
