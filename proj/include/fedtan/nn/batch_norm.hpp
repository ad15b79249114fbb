#pragma once

#include <cmath>
#include <optional>

#include "fedtan/tensor.hpp"

namespace fedtan::nn {

struct BnLayerParams {
  Vector gamma;
  Vector beta;
  double epsilon = 1e-5;

  static BnLayerParams identity(Index features, double epsilon = 1e-5) {
    return {Vector::Ones(features), Vector::Zero(features), epsilon};
  }
  Index features() const { return gamma.size(); }
};

// Batch mean and population variance of one BN layer.
struct BnStats {
  Vector mean;
  Vector variance;

  static BnStats standard(Index features) {
    return {Vector::Zero(features), Vector::Ones(features)};
  }
  Index features() const { return mean.size(); }
};

// Gradients of the loss with respect to the batch mean and batch variance.
struct BnStatGrads {
  Vector d_mean;
  Vector d_variance;

  static BnStatGrads zero(Index features) {
    return {Vector::Zero(features), Vector::Zero(features)};
  }
  Index features() const { return d_mean.size(); }
};

struct BnForwardResult {
  Matrix output;
  BnStats stats;
  Matrix normalized;
};

// Everything bn_backward needs from the matching forward call.
struct BnCache {
  Matrix input;
  Matrix normalized;
  BnStats stats;
};

struct BnBackwardResult {
  Matrix d_input;
  Vector d_gamma;
  Vector d_beta;
  BnStatGrads stat_grads;
};

inline void validate(const BnLayerParams& p) {
  require_size(p.gamma.size() == p.beta.size(), "batch norm: gamma/beta length mismatch");
  if (!(p.epsilon > 0.0)) throw std::invalid_argument("batch norm: epsilon must be positive");
}

inline BnStats batch_stats(const Matrix& input) {
  Vector mean = column_mean(input);
  Vector variance = column_variance_about(input, mean);
  return {std::move(mean), std::move(variance)};
}

inline BnForwardResult bn_forward(const Matrix& input, const BnLayerParams& params,
                                  const std::optional<BnStats>& stats_override = std::nullopt) {
  validate(params);
  require_size(input.rows() >= 1, "batch norm: empty batch");
  require_size(input.cols() == params.features(),
               "batch norm: input " + shape_str(input) + " vs " +
                   std::to_string(params.features()) + " features");

  BnStats stats;
  if (stats_override) {
    require_size(stats_override->mean.size() == params.features() &&
                     stats_override->variance.size() == params.features(),
                 "batch norm: stats override has wrong length");
    stats = *stats_override;
  } else {
    stats = batch_stats(input);
  }

  const Eigen::RowVectorXd inv_std =
      (stats.variance.array() + params.epsilon).rsqrt().matrix().transpose();
  Matrix normalized = (input.rowwise() - stats.mean.transpose()).array().rowwise() *
                      inv_std.array();
  Matrix output = (normalized.array().rowwise() * params.gamma.transpose().array()).rowwise() +
                  params.beta.transpose().array();
  return {std::move(output), std::move(stats), std::move(normalized)};
}

// Local statistical gradients for a layer given the upstream gradient on its output.
// d_mean omits the variance-through-mean path: it vanishes whenever the mean is the
// batch mean and is absent when the statistics are treated as free inputs.
inline BnStatGrads bn_stat_grads(const Matrix& d_output, const BnCache& cache,
                                 const BnLayerParams& params) {
  const Vector inv_std = (cache.stats.variance.array() + params.epsilon).rsqrt().matrix();
  const Matrix d_norm = d_output.array().rowwise() * params.gamma.transpose().array();
  const Matrix centred = cache.input.rowwise() - cache.stats.mean.transpose();

  BnStatGrads g;
  g.d_variance = (d_norm.array() * centred.array()).colwise().sum().transpose().array() *
                 (-0.5 * inv_std.array().cube());
  g.d_mean = d_norm.colwise().sum().transpose().array() * -inv_std.array();
  return g;
}

inline BnBackwardResult bn_backward(const Matrix& d_output, const BnCache& cache,
                                    const BnLayerParams& params,
                                    const std::optional<BnStatGrads>& stat_grads_override =
                                        std::nullopt) {
  validate(params);
  const Index features = params.features();
  require_size(d_output.rows() == cache.input.rows() && d_output.cols() == features &&
                   cache.input.cols() == features && cache.normalized.rows() == cache.input.rows() &&
                   cache.normalized.cols() == features && cache.stats.features() == features,
               "batch norm backward: cache/params dimension mismatch");

  BnStatGrads stat_grads;
  if (stat_grads_override) {
    require_size(stat_grads_override->d_mean.size() == features &&
                     stat_grads_override->d_variance.size() == features,
                 "batch norm backward: stat-grad override has wrong length");
    stat_grads = *stat_grads_override;
  } else {
    stat_grads = bn_stat_grads(d_output, cache, params);
  }

  const double batch = static_cast<double>(cache.input.rows());
  const Eigen::RowVectorXd inv_std =
      (cache.stats.variance.array() + params.epsilon).rsqrt().matrix().transpose();
  const Matrix d_norm = d_output.array().rowwise() * params.gamma.transpose().array();
  const Matrix centred = cache.input.rowwise() - cache.stats.mean.transpose();

  BnBackwardResult out;
  out.d_input = (d_norm.array().rowwise() * inv_std.array()).matrix();
  out.d_input.array() +=
      centred.array().rowwise() * (stat_grads.d_variance.transpose().array() * (2.0 / batch));
  out.d_input.rowwise() += stat_grads.d_mean.transpose() / batch;
  out.d_gamma = (d_output.array() * cache.normalized.array()).colwise().sum().transpose();
  out.d_beta = d_output.colwise().sum().transpose();
  out.stat_grads = std::move(stat_grads);
  return out;
}

}  // namespace fedtan::nn
