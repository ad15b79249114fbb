#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedtan/data/partition.hpp"
#include "fedtan/fl/simulator.hpp"
#include "fedtan/nn/model.hpp"

namespace fedtan::diag {

// One gradient step of the centralized objective on the given batch, batch statistics,
// moving averages updated with momentum rho. Same code path as the centralized scheme.
inline nn::ModelParams centralized_step(const nn::NetworkSpec& spec, nn::ModelParams params,
                                        const fl::Batch& batch, double lr, double rho = 0.1) {
  fl::local_step(spec, params, batch, lr, rho);
  return params;
}

inline fl::Batch full_batch(const data::LabeledDataset& ds) { return {ds.samples, ds.labels}; }

// Statistics, statistical gradients and gradient of F over a whole dataset at w.
struct UnionEvaluation {
  std::vector<nn::BnStats> stats;
  std::vector<nn::BnStatGrads> stat_grads;
  Vector gradient;
  double loss = 0.0;
};

inline UnionEvaluation evaluate_union(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                                      const data::LabeledDataset& ds) {
  auto fwd = nn::model_forward(spec, params, ds.samples);
  auto bwd = nn::model_backward(spec, params, fwd.cache, ds.labels);
  return {fwd.cache.stats(), bwd.stat_grads, bwd.grads.flatten(), bwd.loss};
}

// grad_w F_i(w; S, dS) on a client's full shard with injected statistics and stat grads.
inline Vector injected_gradient(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                                const data::LabeledDataset& shard,
                                const std::vector<nn::BnStats>& stats,
                                const std::vector<nn::BnStatGrads>& stat_grads) {
  auto fwd = nn::model_forward(spec, params, shard.samples, nn::override_all(stats));
  nn::StatGradOverrides overrides(stat_grads.begin(), stat_grads.end());
  return nn::model_backward(spec, params, fwd.cache, shard.labels, overrides).grads.flatten();
}

inline Vector local_gradient(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                             const data::LabeledDataset& shard) {
  auto fwd = nn::model_forward(spec, params, shard.samples);
  return nn::model_backward(spec, params, fwd.cache, shard.labels).grads.flatten();
}

struct DeviationReport {
  std::vector<double> b;  // ||grad F_i(w; S_Di, dS_Di) - grad F_i(w; S_D, dS_D)||^2
  std::vector<double> v;  // ||grad F_i(w; S_D, dS_D) - grad F(w; S_D, dS_D)||^2
};

inline DeviationReport estimate_deviation(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                                          const data::PartitionSpec& partition,
                                          const data::LabeledDataset& dataset) {
  const auto shards = partition.materialize(dataset);
  const auto whole = evaluate_union(spec, params, data::concatenate(shards));
  DeviationReport out;
  for (const auto& shard : shards) {
    const Vector own = local_gradient(spec, params, shard);
    const Vector global = injected_gradient(spec, params, shard, whole.stats, whole.stat_grads);
    out.b.push_back((own - global).squaredNorm());
    out.v.push_back((global - whole.gradient).squaredNorm());
  }
  return out;
}

// Largest elementwise parameter difference after each iteration of two runs.
inline std::vector<double> check_equivalence(const nn::NetworkSpec& spec, fl::SchemeConfig a,
                                             fl::SchemeConfig b, const data::PartitionSpec& partition,
                                             const data::LabeledDataset& dataset, int iterations) {
  if (a.seed != b.seed) throw std::invalid_argument("equivalence: configurations differ in seed");
  a.iterations = b.iterations = iterations;
  fl::Federation fa = fl::make_federation(spec, a, partition, dataset);
  fl::Federation fb = fl::make_federation(spec, b, partition, dataset);
  std::vector<double> diff;
  for (int r = 0; r < iterations; ++r) {
    fl::run_round(fa);
    fl::run_round(fb);
    diff.push_back((fa.server.global.flatten() - fb.server.global.flatten()).cwiseAbs().maxCoeff());
  }
  return diff;
}

enum class FdTarget {
  Weights,      // dense weights and biases, gamma, beta; batch statistics
  Stats,        // per-layer mean and variance, through the statistics override
  FrozenStats,  // weights with statistics injected and zero statistical gradients
};

enum class FdLoss { CrossEntropy, Quadratic };

struct FdReport {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst = 0;
};

namespace detail {

inline std::vector<double*> gradient_scalars(nn::ModelParams& p) {
  std::vector<double*> out;
  auto put = [&](auto& t) {
    for (Index i = 0; i < t.size(); ++i) out.push_back(t.data() + i);
  };
  for (auto& d : p.dense) {
    put(d.weights);
    put(d.bias);
  }
  for (auto& b : p.bn) {
    put(b.gamma);
    put(b.beta);
  }
  return out;
}

inline nn::LossResult loss_of(const Matrix& logits, std::span<const int> labels, FdLoss kind) {
  if (kind == FdLoss::CrossEntropy) return nn::softmax_cross_entropy(logits, labels);
  Matrix target = Matrix::Zero(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) target(r, labels[static_cast<std::size_t>(r)]) = 1.0;
  const double b = static_cast<double>(logits.rows());
  const Matrix diff = logits - target;
  return {0.5 * diff.squaredNorm() / b, diff / b};
}

inline double component_error(double analytic, double numeric) {
  const double gap = std::abs(analytic - numeric);
  if (gap <= 1e-8) return 0.0;
  return gap / std::max(std::abs(analytic), std::abs(numeric));
}

struct Analytic {
  Vector weights;
  std::vector<nn::BnStatGrads> stat_grads;
};

inline Analytic analytic(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                         const fl::Batch& batch, const nn::StatsMode& mode,
                         const nn::StatGradOverrides& overrides, FdLoss kind) {
  auto fwd = nn::model_forward(spec, params, batch.x, mode);
  auto loss = loss_of(fwd.logits, batch.y, kind);
  nn::BackwardPass pass(spec, params, fwd.cache, std::move(loss.d_logits));
  while (pass.advance()) pass.apply_bn(overrides.empty() ? std::nullopt : overrides[pass.bn_index()]);
  Analytic out;
  out.stat_grads = pass.stat_grads();
  out.weights = pass.take_grads().flatten();
  return out;
}

inline double loss_at(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                      const fl::Batch& batch, const nn::StatsMode& mode, FdLoss kind) {
  return loss_of(nn::model_predict(spec, params, batch.x, mode), batch.y, kind).loss;
}

}  // namespace detail

// Central differences against the analytic gradient. Components whose absolute gap is at
// most 1e-8 count as exact; others contribute |a - n| / max(|a|, |n|).
inline FdReport finite_difference_check(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                                        const fl::Batch& batch, double step, FdTarget target,
                                        FdLoss kind = FdLoss::CrossEntropy) {
  if (!(step > 0.0)) throw std::invalid_argument("finite difference: step must be positive");
  FdReport report;
  auto note = [&](double a, double n) {
    const double e = detail::component_error(a, n);
    if (e > report.max_error) {
      report.max_error = e;
      report.worst = report.checked;
    }
    ++report.checked;
  };

  if (target == FdTarget::Stats) {
    const auto base = nn::model_forward(spec, params, batch.x).cache.stats();
    const auto a = detail::analytic(spec, params, batch, nn::BatchStatsMode{}, {}, kind);
    for (std::size_t l = 0; l < base.size(); ++l) {
      auto probe = [&](bool variance, Index f) {
        nn::OverrideStatsMode mode{std::vector<std::optional<nn::BnStats>>(base.size())};
        auto shifted = [&](double delta) {
          nn::BnStats s = base[l];
          (variance ? s.variance : s.mean)(f) += delta;
          mode.stats[l] = s;
          return detail::loss_at(spec, params, batch, mode, kind);
        };
        // The loss curves like (var + eps)^(-1/2), so variance probes scale the step down
        // with the variance itself.
        const double h = variance ? step * std::min(1.0, base[l].variance(f) + params.bn[l].epsilon) : step;
        return (shifted(h) - shifted(-h)) / (2.0 * h);
      };
      for (Index f = 0; f < base[l].mean.size(); ++f) note(a.stat_grads[l].d_mean(f), probe(false, f));
      for (Index f = 0; f < base[l].variance.size(); ++f)
        note(a.stat_grads[l].d_variance(f), probe(true, f));
    }
    return report;
  }

  nn::StatsMode mode = nn::BatchStatsMode{};
  nn::StatGradOverrides overrides;
  if (target == FdTarget::FrozenStats) {
    mode = nn::override_all(params.running);
    overrides = nn::frozen_stat_grads(spec);
  }
  const auto a = detail::analytic(spec, params, batch, mode, overrides, kind);
  nn::ModelParams work = params;
  const auto scalars = detail::gradient_scalars(work);
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    const double keep = *scalars[k];
    *scalars[k] = keep + step;
    const double up = detail::loss_at(spec, work, batch, mode, kind);
    *scalars[k] = keep - step;
    const double down = detail::loss_at(spec, work, batch, mode, kind);
    *scalars[k] = keep;
    note(a.weights(static_cast<Index>(k)), (up - down) / (2.0 * step));
  }
  return report;
}

}  // namespace fedtan::diag
