#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "fedtan/fl/client.hpp"
#include "fedtan/fl/protocol.hpp"
#include "fedtan/nn/model.hpp"

namespace fedtan::fl {

// Lockstep layer-wise aggregation of batch statistics and their gradients.

class LockstepError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// sum_i p_i v_i, reduced in client order.
inline Vector weighted_sum(std::span<const Vector> values, std::span<const double> weights) {
  Vector out = Vector::Zero(values.front().size());
  for (std::size_t i = 0; i < values.size(); ++i) out += weights[i] * values[i];
  return out;
}

struct SyncContext {
  const nn::NetworkSpec* spec = nullptr;
  std::vector<const nn::ModelParams*> models;  // one per client, identical w
  std::vector<double> weights;                 // p_i
  int iteration = 0;
  bool parallel = false;
  Transcript* transcript = nullptr;

  std::size_t clients() const { return models.size(); }

  void check() const {
    if (!spec || !transcript) throw std::invalid_argument("layer sync: incomplete context");
    if (models.empty() || models.size() != weights.size())
      throw std::invalid_argument("layer sync: one weight per client required");
  }

  void upload(MessageKind kind, int layer, std::size_t scalars) const {
    for (std::size_t i = 0; i < clients(); ++i)
      transcript->record({Direction::Up, kind, layer, static_cast<int>(i), scalars, iteration});
  }
  void broadcast(MessageKind kind, int layer, std::size_t scalars) const {
    transcript->record({Direction::Down, kind, layer, kBroadcast, scalars, iteration});
  }
};

struct SyncedForward {
  std::vector<nn::ForwardCache> caches;
  std::vector<nn::BnStats> global_stats;  // per BN layer, shared by every client
};

// Forward pass in which every BN layer uses the p-weighted global mean, then the
// p-weighted variance measured by each client against that global mean.
inline SyncedForward fedtan_forward_sync(const SyncContext& ctx, std::span<const Matrix> batches) {
  ctx.check();
  const std::size_t n = ctx.clients();
  if (batches.size() != n) throw LockstepError("forward sync: every client must supply a batch");
  const Vector reference = ctx.models.front()->flatten(nn::kGradientParams);
  for (std::size_t i = 1; i < n; ++i)
    if (ctx.models[i]->flatten(nn::kGradientParams) != reference)
      throw LockstepError("forward sync: clients must start from the broadcast model");

  std::vector<nn::ForwardPass> passes;
  passes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) passes.emplace_back(*ctx.spec, *ctx.models[i], batches[i]);

  SyncedForward out;
  std::vector<char> paused(n);
  std::vector<Vector> local(n);
  for (;;) {
    for_each_client(n, ctx.parallel, [&](std::size_t i) { paused[i] = passes[i].advance(); });
    const bool any = std::find(paused.begin(), paused.end(), 1) != paused.end();
    const bool all = std::find(paused.begin(), paused.end(), 0) == paused.end();
    if (!any) break;
    if (!all) throw LockstepError("forward sync: clients disagree on the next BN layer");

    const int layer = passes.front().bn_index();
    const auto features = static_cast<std::size_t>(passes.front().pending_input().cols());

    for_each_client(n, ctx.parallel, [&](std::size_t i) { local[i] = column_mean(passes[i].pending_input()); });
    ctx.upload(MessageKind::LayerMeanUp, layer, features);
    const Vector global_mean = weighted_sum(local, ctx.weights);
    ctx.broadcast(MessageKind::LayerMeanDown, layer, features);

    for_each_client(n, ctx.parallel, [&](std::size_t i) {
      local[i] = column_variance_about(passes[i].pending_input(), global_mean);
    });
    ctx.upload(MessageKind::LayerVarUp, layer, features);
    const Vector global_var = weighted_sum(local, ctx.weights);
    ctx.broadcast(MessageKind::LayerVarDown, layer, features);

    const nn::BnStats synced{global_mean, global_var};
    for_each_client(n, ctx.parallel, [&](std::size_t i) { passes[i].apply_bn(synced); });
    out.global_stats.push_back(synced);
  }
  for (auto& p : passes) out.caches.push_back(p.take_cache());
  return out;
}

struct SyncedBackward {
  std::vector<nn::BackwardResult> results;     // per client
  std::vector<nn::BnStatGrads> global_stat_grads;  // per BN layer
};

// Backward pass from the output layer down; at each BN layer the clients' statistical
// gradients are replaced by their p-weighted average before propagation continues.
inline SyncedBackward fedtan_backward_sync(const SyncContext& ctx,
                                           std::span<const nn::ForwardCache> caches,
                                           std::span<const std::vector<int>> labels) {
  ctx.check();
  const std::size_t n = ctx.clients();
  if (caches.size() != n || labels.size() != n)
    throw LockstepError("backward sync: every client must supply a cache and labels");

  std::vector<double> losses(n);
  std::vector<nn::BackwardPass> passes;
  passes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto loss = nn::softmax_cross_entropy(caches[i].logits, labels[i]);
    losses[i] = loss.loss;
    passes.emplace_back(*ctx.spec, *ctx.models[i], caches[i], std::move(loss.d_logits));
  }

  SyncedBackward out;
  out.global_stat_grads.resize(static_cast<std::size_t>(ctx.spec->bn_layer_count()));
  std::vector<char> paused(n);
  std::vector<Vector> d_var(n), d_mean(n);
  for (;;) {
    for_each_client(n, ctx.parallel, [&](std::size_t i) { paused[i] = passes[i].advance(); });
    const bool any = std::find(paused.begin(), paused.end(), 1) != paused.end();
    const bool all = std::find(paused.begin(), paused.end(), 0) == paused.end();
    if (!any) break;
    if (!all) throw LockstepError("backward sync: clients disagree on the next BN layer");

    const int layer = passes.front().bn_index();
    for_each_client(n, ctx.parallel, [&](std::size_t i) {
      auto g = passes[i].local_stat_grads();
      d_var[i] = std::move(g.d_variance);
      d_mean[i] = std::move(g.d_mean);
    });
    const auto features = static_cast<std::size_t>(d_var.front().size());
    ctx.upload(MessageKind::LayerStatGradUp, layer, 2 * features);
    nn::BnStatGrads avg{weighted_sum(d_mean, ctx.weights), weighted_sum(d_var, ctx.weights)};
    ctx.broadcast(MessageKind::LayerStatGradDown, layer, 2 * features);

    for_each_client(n, ctx.parallel, [&](std::size_t i) { passes[i].apply_bn(avg); });
    out.global_stat_grads[static_cast<std::size_t>(layer)] = std::move(avg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    nn::BackwardResult r;
    r.loss = losses[i];
    r.stat_grads = passes[i].stat_grads();
    r.grads = passes[i].take_grads();
    out.results.push_back(std::move(r));
  }
  return out;
}

}  // namespace fedtan::fl
