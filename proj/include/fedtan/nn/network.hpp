#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fedtan/nn/batch_norm.hpp"
#include "fedtan/nn/dense.hpp"
#include "fedtan/tensor.hpp"

namespace fedtan::nn {

enum class LayerKind { Dense, BatchNorm, ReLU, Tanh };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  Index units = 0;  // output width, Dense only
};

// Ordered layer list. BN layers are indexed 0..L-1 in order of appearance.
struct NetworkSpec {
  Index input_dim = 0;
  std::vector<LayerSpec> layers;
  double epsilon = 1e-5;

  // Width of the tensor entering each layer, plus the final output width.
  std::vector<Index> widths() const {
    std::vector<Index> w{input_dim};
    for (const auto& l : layers) w.push_back(l.kind == LayerKind::Dense ? l.units : w.back());
    return w;
  }
  Index output_dim() const { return widths().back(); }

  int bn_layer_count() const { return count(LayerKind::BatchNorm); }
  int dense_layer_count() const { return count(LayerKind::Dense); }

  // Feature count of every BN layer, in order.
  std::vector<Index> bn_features() const {
    std::vector<Index> out;
    const auto w = widths();
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].kind == LayerKind::BatchNorm) out.push_back(w[i]);
    return out;
  }

  void validate() const {
    require_size(input_dim >= 1, "network: input dimension must be positive");
    require_size(!layers.empty(), "network: no layers");
    if (!(epsilon > 0.0)) throw std::invalid_argument("network: epsilon must be positive");
    bool seen_dense = false;
    for (const auto& l : layers) {
      if (l.kind == LayerKind::Dense) {
        require_size(l.units >= 1, "network: dense layer needs a positive width");
        seen_dense = true;
      }
      if (l.kind == LayerKind::BatchNorm && !seen_dense)
        throw std::invalid_argument(
            "network: a BN layer must follow a feature-extraction layer, not the input");
    }
  }

  // input -> [dense(h) -> BN? -> act] per hidden width -> dense(output)
  static NetworkSpec mlp(Index input, const std::vector<Index>& hidden, Index output,
                         bool batch_norm, LayerKind activation = LayerKind::ReLU) {
    NetworkSpec s;
    s.input_dim = input;
    for (Index h : hidden) {
      s.layers.push_back({LayerKind::Dense, h});
      if (batch_norm) s.layers.push_back({LayerKind::BatchNorm, 0});
      s.layers.push_back({activation, 0});
    }
    s.layers.push_back({LayerKind::Dense, output});
    return s;
  }

  // 784 x 30 x 10 with BN after the hidden layer.
  static NetworkSpec mnist(Index hidden = 30, double epsilon = 1e-5) {
    NetworkSpec s = mlp(784, {hidden}, 10, true);
    s.epsilon = epsilon;
    return s;
  }

 private:
  int count(LayerKind k) const {
    int n = 0;
    for (const auto& l : layers) n += l.kind == k;
    return n;
  }
};

// Which parts of the model an aggregation or message touches.
enum ParamGroup : unsigned {
  kDenseParams = 1u,    // feature-extraction weights and biases
  kBnAffine = 2u,       // BN scale and shift
  kRunningStats = 4u,   // moving-average batch statistics
  kGradientParams = kDenseParams | kBnAffine,
  kAllParams = kGradientParams | kRunningStats,
};

struct DenseGrads {
  Matrix d_weights;
  Vector d_bias;
};

struct BnAffineGrads {
  Vector d_gamma;
  Vector d_beta;
};

struct ModelGrads {
  std::vector<DenseGrads> dense;
  std::vector<BnAffineGrads> bn;

  Vector flatten() const {
    std::vector<double> out;
    for (const auto& d : dense) {
      out.insert(out.end(), d.d_weights.data(), d.d_weights.data() + d.d_weights.size());
      out.insert(out.end(), d.d_bias.data(), d.d_bias.data() + d.d_bias.size());
    }
    for (const auto& b : bn) {
      out.insert(out.end(), b.d_gamma.data(), b.d_gamma.data() + b.d_gamma.size());
      out.insert(out.end(), b.d_beta.data(), b.d_beta.data() + b.d_beta.size());
    }
    return Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
  }
};

// Gradient parameters w (dense layers, BN affine) plus moving-average statistics.
struct ModelParams {
  std::vector<DenseLayerParams> dense;
  std::vector<BnLayerParams> bn;
  std::vector<BnStats> running;

  static ModelParams init(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    ModelParams p;
    const auto w = spec.widths();
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      if (l.kind == LayerKind::Dense) {
        p.dense.push_back(DenseLayerParams::uniform_init(w[i], l.units, rng));
      } else if (l.kind == LayerKind::BatchNorm) {
        p.bn.push_back(BnLayerParams::identity(w[i], spec.epsilon));
        p.running.push_back(BnStats::standard(w[i]));
      }
    }
    return p;
  }

  std::size_t scalar_count(unsigned groups = kAllParams) const {
    std::size_t n = 0;
    if (groups & kDenseParams)
      for (const auto& d : dense) n += static_cast<std::size_t>(d.weights.size() + d.bias.size());
    if (groups & kBnAffine)
      for (const auto& b : bn) n += static_cast<std::size_t>(b.gamma.size() + b.beta.size());
    if (groups & kRunningStats)
      for (const auto& s : running) n += static_cast<std::size_t>(s.mean.size() + s.variance.size());
    return n;
  }

  Vector flatten(unsigned groups = kAllParams) const {
    std::vector<double> out;
    auto put = [&](const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); };
    if (groups & kDenseParams)
      for (const auto& d : dense) {
        put(d.weights);
        put(d.bias);
      }
    if (groups & kBnAffine)
      for (const auto& b : bn) {
        put(b.gamma);
        put(b.beta);
      }
    if (groups & kRunningStats)
      for (const auto& s : running) {
        put(s.mean);
        put(s.variance);
      }
    return Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
  }

  // w <- w - lr * grad
  void apply_gradient(const ModelGrads& g, double lr) {
    require_size(g.dense.size() == dense.size() && g.bn.size() == bn.size(),
                 "apply_gradient: layer count mismatch");
    for (std::size_t i = 0; i < dense.size(); ++i) {
      dense[i].weights -= lr * g.dense[i].d_weights;
      dense[i].bias -= lr * g.dense[i].d_bias;
    }
    for (std::size_t i = 0; i < bn.size(); ++i) {
      bn[i].gamma -= lr * g.bn[i].d_gamma;
      bn[i].beta -= lr * g.bn[i].d_beta;
    }
  }

  // S_bar <- (1 - rho) S_bar + rho S
  void update_running(const std::vector<BnStats>& batch, double rho) {
    require_size(batch.size() == running.size(), "update_running: layer count mismatch");
    for (std::size_t i = 0; i < running.size(); ++i) {
      running[i].mean = (1.0 - rho) * running[i].mean + rho * batch[i].mean;
      running[i].variance = (1.0 - rho) * running[i].variance + rho * batch[i].variance;
    }
  }

  void copy_groups_from(const ModelParams& src, unsigned groups) {
    if (groups & kDenseParams) dense = src.dense;
    if (groups & kBnAffine) bn = src.bn;
    if (groups & kRunningStats) running = src.running;
  }
};

// sum_i weights[i] * models[i], restricted to `groups`; other groups copied from base.
inline ModelParams weighted_average(const std::vector<const ModelParams*>& models,
                                    const std::vector<double>& weights, unsigned groups,
                                    const ModelParams& base) {
  require_size(!models.empty() && models.size() == weights.size(),
               "weighted_average: model/weight count mismatch");
  ModelParams out = base;
  auto scale_into = [&](auto member, auto field) {
    auto& dst_layers = out.*member;
    for (std::size_t l = 0; l < dst_layers.size(); ++l) {
      auto& dst = dst_layers[l].*field;
      dst.setZero();
      for (std::size_t m = 0; m < models.size(); ++m) dst += weights[m] * ((*models[m]).*member)[l].*field;
    }
  };
  if (groups & kDenseParams) {
    scale_into(&ModelParams::dense, &DenseLayerParams::weights);
    scale_into(&ModelParams::dense, &DenseLayerParams::bias);
  }
  if (groups & kBnAffine) {
    scale_into(&ModelParams::bn, &BnLayerParams::gamma);
    scale_into(&ModelParams::bn, &BnLayerParams::beta);
  }
  if (groups & kRunningStats) {
    scale_into(&ModelParams::running, &BnStats::mean);
    scale_into(&ModelParams::running, &BnStats::variance);
  }
  return out;
}

}  // namespace fedtan::nn
