#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fedtan/data/partition.hpp"
#include "fedtan/fl/client.hpp"
#include "fedtan/fl/layer_sync.hpp"
#include "fedtan/fl/protocol.hpp"
#include "fedtan/fl/scheme.hpp"
#include "fedtan/metrics/evaluate.hpp"
#include "fedtan/nn/model.hpp"

namespace fedtan::fl {

struct ServerState {
  nn::ModelParams global;       // w_bar_r and S_bar_r
  std::vector<double> weights;  // p_i
  Scheme scheme = Scheme::FedTAN;
  int round = 0;
};

struct Federation {
  nn::NetworkSpec spec;
  SchemeConfig config;
  ServerState server;
  std::vector<ClientState> clients;
};

// Builds server and clients from a partition. The centralized scheme collapses the
// partition into one client holding the union of the shards.
inline Federation make_federation(const nn::NetworkSpec& spec, const SchemeConfig& config,
                                  const data::PartitionSpec& partition,
                                  const data::LabeledDataset& dataset) {
  spec.validate();
  config.validate();
  if (partition.clients() == 0) throw std::invalid_argument("federation: empty partition");
  if (dataset.input_dim() != spec.input_dim)
    throw std::invalid_argument("federation: dataset width does not match the network input");

  Federation fed{spec, config, {}, {}};
  fed.server.global = nn::ModelParams::init(spec, config.seed);
  fed.server.scheme = config.scheme;

  std::vector<data::LabeledDataset> shards = partition.materialize(dataset);
  std::vector<double> weights = partition.weights;
  if (config.scheme == Scheme::Centralized) {
    shards = {data::concatenate(shards)};
    weights = {1.0};
  }
  fed.server.weights = weights;

  std::seed_seq seq{config.seed, std::uint64_t{0x5eed}};
  std::vector<std::uint64_t> client_seeds(shards.size());
  seq.generate(client_seeds.begin(), client_seeds.end());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const Index count = shards[i].size();
    fed.clients.push_back(ClientState{static_cast<int>(i), std::move(shards[i]), fed.server.global,
                                      BatchSampler(count, config.batch_size, client_seeds[i])});
  }
  return fed;
}


// One plain local step: batch statistics, local statistical gradients, SGD, moving average.
// With frozen statistics the stored moving averages normalise and are treated as constants.
inline double local_step(const nn::NetworkSpec& spec, nn::ModelParams& model, const Batch& batch,
                         double lr, double rho, bool frozen_stats = false) {
  if (frozen_stats) {
    auto fwd = nn::model_forward(spec, model, batch.x, nn::override_all(model.running));
    auto bwd = nn::model_backward(spec, model, fwd.cache, batch.y, nn::frozen_stat_grads(spec));
    model.apply_gradient(bwd.grads, lr);
    return bwd.loss;
  }
  auto fwd = nn::model_forward(spec, model, batch.x);
  auto bwd = nn::model_backward(spec, model, fwd.cache, batch.y);
  model.apply_gradient(bwd.grads, lr);
  model.update_running(fwd.cache.stats(), rho);
  return bwd.loss;
}

// Plain local update of one client over `steps` steps.
inline double local_update_plain(const nn::NetworkSpec& spec, ClientState& client, int steps,
                                 double lr, double rho, bool frozen_stats = false) {
  if (steps < 1) throw std::invalid_argument("local update: steps must be >= 1");
  double loss = 0.0;
  for (int t = 0; t < steps; ++t)
    loss += local_step(spec, client.model, client.next_batch(), lr, rho, frozen_stats);
  return loss / steps;
}

struct RoundResult {
  double train_loss = 0.0;  // p-weighted mean of the clients' per-step batch losses
  Transcript transcript;
};

// First local step with layer-wise aggregation. Returns each client's loss.
inline std::vector<double> synced_first_step(Federation& fed, int r, double lr, Transcript& log) {
  const std::size_t n = fed.clients.size();
  std::vector<Batch> batches(n);
  for (std::size_t i = 0; i < n; ++i) batches[i] = fed.clients[i].next_batch();

  SyncContext ctx;
  ctx.spec = &fed.spec;
  for (const auto& c : fed.clients) ctx.models.push_back(&c.model);
  ctx.weights = fed.server.weights;
  ctx.iteration = r;
  ctx.parallel = fed.config.parallel;
  ctx.transcript = &log;

  std::vector<Matrix> xs(n);
  std::vector<std::vector<int>> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = std::move(batches[i].x);
    ys[i] = std::move(batches[i].y);
  }
  auto fwd = fedtan_forward_sync(ctx, xs);

  std::vector<nn::BackwardResult> back(n);
  if (fed.config.syncs_backward(r)) {
    back = fedtan_backward_sync(ctx, fwd.caches, ys).results;
  } else {
    for_each_client(n, fed.config.parallel, [&](std::size_t i) {
      back[i] = nn::model_backward(fed.spec, fed.clients[i].model, fwd.caches[i], ys[i]);
    });
  }

  std::vector<double> losses(n);
  for_each_client(n, fed.config.parallel, [&](std::size_t i) {
    auto& model = fed.clients[i].model;
    model.apply_gradient(back[i].grads, lr);
    model.update_running(fwd.global_stats, fed.config.momentum);
    losses[i] = back[i].loss;
  });
  return losses;
}

inline RoundResult run_round(Federation& fed) {
  const auto& cfg = fed.config;
  if (fed.server.scheme != cfg.scheme) throw std::logic_error("run_round: scheme/state mismatch");
  const int r = ++fed.server.round;
  const double lr = cfg.lr_at(r);
  const bool frozen = cfg.stats_frozen(r);
  const bool centralized = cfg.scheme == Scheme::Centralized;
  const unsigned exchanged = cfg.exchanged_groups();
  const std::size_t n = fed.clients.size();

  RoundResult out;
  Transcript& log = out.transcript;

  if (!centralized)
    log.record({Direction::Down, MessageKind::GlobalModel, kNoLayer, kBroadcast,
                fed.server.global.scalar_count(exchanged), r});
  for (auto& c : fed.clients) c.model.copy_groups_from(fed.server.global, exchanged);

  std::vector<double> losses(n, 0.0);
  int plain_steps = cfg.local_steps;
  if (!centralized && cfg.syncs_forward(r)) {
    losses = synced_first_step(fed, r, lr, log);
    --plain_steps;
  }
  if (plain_steps > 0)
    for_each_client(n, cfg.parallel, [&](std::size_t i) {
      losses[i] += plain_steps *
                   local_update_plain(fed.spec, fed.clients[i], plain_steps, lr, cfg.momentum, frozen);
    });

  for (std::size_t i = 0; i < n; ++i) {
    out.train_loss += fed.server.weights[i] * losses[i] / cfg.local_steps;
    if (!centralized)
      log.record({Direction::Up, MessageKind::LocalModel, kNoLayer, static_cast<int>(i),
                  fed.clients[i].model.scalar_count(exchanged), r});
  }

  std::vector<const nn::ModelParams*> models;
  for (const auto& c : fed.clients) models.push_back(&c.model);
  fed.server.global =
      nn::weighted_average(models, fed.server.weights, cfg.aggregated_groups(r), fed.server.global);
  return out;
}

// Model as seen by client i after the latest aggregation: shared parts from the server,
// local parts from the client.
inline nn::ModelParams client_view(const Federation& fed, std::size_t i) {
  nn::ModelParams m = fed.clients.at(i).model;
  m.copy_groups_from(fed.server.global, fed.config.aggregated_groups(fed.server.round));
  return m;
}

struct HistoryRow {
  int iteration = 0;
  std::string scheme;
  double train_loss = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t cum_bytes = 0;
  std::uint64_t cum_rounds = 0;
  double wall_seconds = 0.0;
};

using History = std::vector<HistoryRow>;

// Test accuracy of the current federation. Schemes with client-local BN parts report the
// mean accuracy of the per-client models.
inline double test_accuracy(const Federation& fed, const data::LabeledDataset& test) {
  if (fed.config.scheme == Scheme::FedBN || fed.config.scheme == Scheme::SiloBN) {
    double acc = 0.0;
    for (std::size_t i = 0; i < fed.clients.size(); ++i)
      acc += metrics::evaluate(fed.spec, client_view(fed, i), test).accuracy;
    return acc / static_cast<double>(fed.clients.size());
  }
  return metrics::evaluate(fed.spec, fed.server.global, test).accuracy;
}

struct ExperimentOptions {
  const data::LabeledDataset* test = nullptr;  // no evaluation when null
  bool record_wall_time = false;
  std::function<void(const Federation&, const RoundResult&)> on_round;
};

inline History run_experiment(Federation& fed, const ExperimentOptions& opts = {}) {
  History history;
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int r = 1; r <= fed.config.iterations; ++r) {
    RoundResult res = run_round(fed);
    bytes += res.transcript.bytes();
    rounds += res.transcript.rounds();

    HistoryRow row;
    row.iteration = r;
    row.scheme = std::string(to_string(fed.config.scheme));
    row.train_loss = res.train_loss;
    row.cum_bytes = bytes;
    row.cum_rounds = rounds;
    if (opts.test && (r % fed.config.eval_every == 0 || r == fed.config.iterations))
      row.test_accuracy = test_accuracy(fed, *opts.test);
    if (opts.record_wall_time)
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(std::move(row));
    if (opts.on_round) opts.on_round(fed, res);
  }
  return history;
}

inline History run_experiment(const nn::NetworkSpec& spec, const SchemeConfig& config,
                              const data::PartitionSpec& partition,
                              const data::LabeledDataset& train, const ExperimentOptions& opts = {}) {
  Federation fed = make_federation(spec, config, partition, train);
  return run_experiment(fed, opts);
}

}  // namespace fedtan::fl
