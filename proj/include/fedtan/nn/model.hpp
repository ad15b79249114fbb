#pragma once

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "fedtan/nn/activation.hpp"
#include "fedtan/nn/batch_norm.hpp"
#include "fedtan/nn/dense.hpp"
#include "fedtan/nn/network.hpp"

namespace fedtan::nn {

// Normalise with the statistics of the batch being processed (training).
struct BatchStatsMode {};
// Per-BN-layer statistics supplied by the caller; nullopt entries fall back to batch stats.
struct OverrideStatsMode {
  std::vector<std::optional<BnStats>> stats;
};
// Normalise with the stored moving averages (inference).
struct MovingAverageMode {};

using StatsMode = std::variant<BatchStatsMode, OverrideStatsMode, MovingAverageMode>;

inline OverrideStatsMode override_all(const std::vector<BnStats>& stats) {
  return {std::vector<std::optional<BnStats>>(stats.begin(), stats.end())};
}

struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // input to every layer, in spec order
  std::vector<BnCache> bn;           // Y, Y_hat and stats per BN layer
  Matrix logits;

  Index batch_size() const { return logits.rows(); }
  std::vector<BnStats> stats() const {
    std::vector<BnStats> out;
    out.reserve(bn.size());
    for (const auto& c : bn) out.push_back(c.stats);
    return out;
  }
};

// Layer-by-layer forward propagation that pauses at the input of every BN layer so the
// caller can decide which statistics the layer uses.
class ForwardPass {
 public:
  ForwardPass(const NetworkSpec& spec, const ModelParams& params, Matrix batch,
              bool keep_cache = true)
      : spec_(&spec), params_(&params), current_(std::move(batch)), keep_cache_(keep_cache) {
    require_size(current_.rows() >= 1, "forward: empty batch");
    require_size(current_.cols() == spec.input_dim,
                 "forward: batch " + shape_str(current_) + " vs input dim " +
                     std::to_string(spec.input_dim));
    require_size(static_cast<int>(params.dense.size()) == spec.dense_layer_count() &&
                     static_cast<int>(params.bn.size()) == spec.bn_layer_count(),
                 "forward: parameters do not match network spec");
  }

  // Runs layers until the next BN layer (returns true) or the end of the network.
  bool advance() {
    require_size(!pending_bn_, "forward: BN layer awaiting statistics");
    while (layer_ < spec_->layers.size()) {
      const auto kind = spec_->layers[layer_].kind;
      if (kind == LayerKind::BatchNorm) {
        pending_bn_ = true;
        return true;
      }
      if (keep_cache_) cache_.layer_inputs.push_back(current_);
      switch (kind) {
        case LayerKind::Dense:
          current_ = dense_forward(current_, params_->dense[dense_++]);
          break;
        case LayerKind::ReLU:
          current_ = relu_forward(current_);
          break;
        case LayerKind::Tanh:
          current_ = tanh_forward(current_);
          break;
        case LayerKind::BatchNorm:
          break;
      }
      ++layer_;
    }
    return false;
  }

  int bn_index() const { return bn_; }
  const Matrix& pending_input() const { return current_; }

  void apply_bn(const std::optional<BnStats>& stats_override = std::nullopt) {
    require_size(pending_bn_, "forward: no BN layer pending");
    auto r = bn_forward(current_, params_->bn[bn_], stats_override);
    if (keep_cache_) {
      cache_.layer_inputs.push_back(current_);
      cache_.bn.push_back({std::move(current_), std::move(r.normalized), r.stats});
    }
    batch_stats_.push_back(std::move(r.stats));
    current_ = std::move(r.output);
    ++bn_;
    ++layer_;
    pending_bn_ = false;
  }

  bool finished() const { return layer_ == spec_->layers.size(); }
  const std::vector<BnStats>& used_stats() const { return batch_stats_; }

  ForwardCache take_cache() {
    require_size(finished(), "forward: pass not finished");
    cache_.logits = current_;
    return std::move(cache_);
  }
  Matrix take_output() {
    require_size(finished(), "forward: pass not finished");
    return std::move(current_);
  }

 private:
  const NetworkSpec* spec_;
  const ModelParams* params_;
  Matrix current_;
  bool keep_cache_;
  std::size_t layer_ = 0;
  int dense_ = 0;
  int bn_ = 0;
  bool pending_bn_ = false;
  ForwardCache cache_;
  std::vector<BnStats> batch_stats_;
};

namespace detail {
inline std::optional<BnStats> stats_for_layer(const StatsMode& mode, const ModelParams& params,
                                              int layer) {
  if (std::holds_alternative<MovingAverageMode>(mode)) return params.running.at(layer);
  if (const auto* o = std::get_if<OverrideStatsMode>(&mode)) return o->stats.at(layer);
  return std::nullopt;
}

inline void check_mode(const StatsMode& mode, const NetworkSpec& spec, const ModelParams& params) {
  if (const auto* o = std::get_if<OverrideStatsMode>(&mode))
    require_size(static_cast<int>(o->stats.size()) == spec.bn_layer_count(),
                 "forward: override list length must equal the BN layer count");
  if (std::holds_alternative<MovingAverageMode>(mode))
    require_size(static_cast<int>(params.running.size()) == spec.bn_layer_count(),
                 "forward: missing moving-average statistics");
}
}  // namespace detail

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

inline ForwardResult model_forward(const NetworkSpec& spec, const ModelParams& params,
                                   const Matrix& batch, const StatsMode& mode = BatchStatsMode{}) {
  detail::check_mode(mode, spec, params);
  ForwardPass pass(spec, params, batch);
  while (pass.advance()) pass.apply_bn(detail::stats_for_layer(mode, params, pass.bn_index()));
  ForwardCache cache = pass.take_cache();
  Matrix logits = cache.logits;
  return {std::move(logits), std::move(cache)};
}

// Logits only, without retaining intermediate tensors.
inline Matrix model_predict(const NetworkSpec& spec, const ModelParams& params,
                            const Matrix& batch, const StatsMode& mode = MovingAverageMode{}) {
  detail::check_mode(mode, spec, params);
  ForwardPass pass(spec, params, batch, /*keep_cache=*/false);
  while (pass.advance()) pass.apply_bn(detail::stats_for_layer(mode, params, pass.bn_index()));
  return pass.take_output();
}

// Reverse-mode counterpart of ForwardPass. Pauses whenever the gradient on a BN layer's
// output is available, before that layer's statistical gradients are committed.
class BackwardPass {
 public:
  BackwardPass(const NetworkSpec& spec, const ModelParams& params, const ForwardCache& cache,
               Matrix d_logits)
      : spec_(&spec), params_(&params), cache_(&cache), grad_(std::move(d_logits)) {
    require_size(cache.layer_inputs.size() == spec.layers.size() &&
                     static_cast<int>(cache.bn.size()) == spec.bn_layer_count(),
                 "backward: cache does not match network spec");
    require_size(grad_.rows() == cache.batch_size() && grad_.cols() == spec.output_dim(),
                 "backward: output gradient shape mismatch");
    layer_ = spec.layers.size();
    dense_ = static_cast<int>(params.dense.size());
    bn_ = static_cast<int>(params.bn.size());
    grads_.dense.resize(params.dense.size());
    grads_.bn.resize(params.bn.size());
    stat_grads_.resize(params.bn.size());
  }

  bool advance() {
    require_size(!pending_bn_, "backward: BN layer awaiting statistical gradients");
    while (layer_ > 0) {
      const std::size_t i = layer_ - 1;
      const Matrix& input = cache_->layer_inputs[i];
      switch (spec_->layers[i].kind) {
        case LayerKind::BatchNorm:
          pending_bn_ = true;
          return true;
        case LayerKind::Dense: {
          const auto& p = params_->dense[--dense_];
          auto& g = grads_.dense[dense_];
          g.d_weights = grad_.transpose() * input;
          g.d_bias = grad_.colwise().sum().transpose();
          // The gradient on the network input is never needed.
          if (i > 0) grad_ = grad_ * p.weights;
          break;
        }
        case LayerKind::ReLU:
          grad_ = relu_backward(grad_, input);
          break;
        case LayerKind::Tanh:
          grad_ = tanh_backward(grad_, input);
          break;
      }
      --layer_;
    }
    return false;
  }

  // 0-based index of the BN layer the pass is paused at.
  int bn_index() const { return bn_ - 1; }

  BnStatGrads local_stat_grads() const {
    require_size(pending_bn_, "backward: no BN layer pending");
    return bn_stat_grads(grad_, cache_->bn[bn_ - 1], params_->bn[bn_ - 1]);
  }

  void apply_bn(const std::optional<BnStatGrads>& stat_grads_override = std::nullopt) {
    require_size(pending_bn_, "backward: no BN layer pending");
    const int l = --bn_;
    auto r = bn_backward(grad_, cache_->bn[l], params_->bn[l], stat_grads_override);
    grads_.bn[l] = {std::move(r.d_gamma), std::move(r.d_beta)};
    stat_grads_[l] = std::move(r.stat_grads);
    grad_ = std::move(r.d_input);
    --layer_;
    pending_bn_ = false;
  }

  bool finished() const { return layer_ == 0; }
  const std::vector<BnStatGrads>& stat_grads() const { return stat_grads_; }

  ModelGrads take_grads() {
    require_size(finished(), "backward: pass not finished");
    return std::move(grads_);
  }

 private:
  const NetworkSpec* spec_;
  const ModelParams* params_;
  const ForwardCache* cache_;
  Matrix grad_;
  std::size_t layer_ = 0;
  int dense_ = 0;
  int bn_ = 0;
  bool pending_bn_ = false;
  ModelGrads grads_;
  std::vector<BnStatGrads> stat_grads_;
};

struct BackwardResult {
  double loss = 0.0;
  ModelGrads grads;
  std::vector<BnStatGrads> stat_grads;
};

using StatGradOverrides = std::vector<std::optional<BnStatGrads>>;

inline BackwardResult model_backward(const NetworkSpec& spec, const ModelParams& params,
                                     const ForwardCache& cache, std::span<const int> labels,
                                     const StatGradOverrides& overrides = {}) {
  require_size(overrides.empty() || static_cast<int>(overrides.size()) == spec.bn_layer_count(),
               "backward: override list length must equal the BN layer count");
  auto loss = softmax_cross_entropy(cache.logits, labels);
  BackwardPass pass(spec, params, cache, std::move(loss.d_logits));
  while (pass.advance())
    pass.apply_bn(overrides.empty() ? std::nullopt : overrides[pass.bn_index()]);
  BackwardResult out;
  out.loss = loss.loss;
  out.stat_grads = pass.stat_grads();
  out.grads = pass.take_grads();
  return out;
}

// Overrides that zero every statistical gradient: the statistics behave as constants.
inline StatGradOverrides frozen_stat_grads(const NetworkSpec& spec) {
  StatGradOverrides out;
  for (Index f : spec.bn_features()) out.emplace_back(BnStatGrads::zero(f));
  return out;
}

}  // namespace fedtan::nn
