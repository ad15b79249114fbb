#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fedtan/data/idx.hpp"
#include "fedtan/data/partition.hpp"
#include "fedtan/data/synthetic.hpp"
#include "fedtan/diag/oracle.hpp"
#include "fedtan/fl/layer_sync.hpp"
#include "fedtan/fl/simulator.hpp"
#include "fedtan/metrics/comm.hpp"

namespace fedtan::diag {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Random tanh network with 1-3 BN layers, widths <= 8, perturbed affine and running stats.
struct RandomCase {
  nn::NetworkSpec spec;
  nn::ModelParams params;
  fl::Batch batch;
};

inline RandomCase random_case(std::uint64_t seed, Index max_batch = 16) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.5, 1.5);

  const int bn_layers = pick(1, 3);
  std::vector<Index> hidden;
  for (int i = 0; i < bn_layers; ++i) hidden.push_back(pick(2, 8));
  const int classes = pick(2, 6);
  RandomCase c;
  c.spec = nn::NetworkSpec::mlp(pick(2, 8), hidden, classes, true, nn::LayerKind::Tanh);
  c.params = nn::ModelParams::init(c.spec, rng());
  for (auto& b : c.params.bn) {
    for (Index f = 0; f < b.gamma.size(); ++f) b.gamma(f) = unit(rng);
    for (Index f = 0; f < b.beta.size(); ++f) b.beta(f) = 0.3 * normal(rng);
  }
  for (auto& s : c.params.running) {
    for (Index f = 0; f < s.mean.size(); ++f) s.mean(f) = 0.5 * normal(rng);
    for (Index f = 0; f < s.variance.size(); ++f) s.variance(f) = unit(rng);
  }
  const Index rows = pick(4, static_cast<int>(max_batch));
  c.batch.x = Matrix(rows, c.spec.input_dim);
  for (Index r = 0; r < rows; ++r)
    for (Index j = 0; j < c.spec.input_dim; ++j) c.batch.x(r, j) = normal(rng);
  for (Index r = 0; r < rows; ++r) c.batch.y.push_back(pick(0, classes - 1));
  return c;
}

inline CheckResult check_gradients(int cases = 100) {
  CheckResult r{1, "gradient correctness", true, "", 0.0};
  double worst[3] = {0, 0, 0};
  const FdTarget targets[3] = {FdTarget::Weights, FdTarget::Stats, FdTarget::FrozenStats};
  for (int k = 0; k < cases; ++k) {
    const auto c = random_case(1000 + static_cast<std::uint64_t>(k));
    for (int t = 0; t < 3; ++t) {
      const auto rep = finite_difference_check(c.spec, c.params, c.batch, 1e-5, targets[t]);
      worst[t] = std::max(worst[t], rep.max_error);
    }
  }
  r.passed = worst[0] < 1e-4 && worst[1] < 1e-4 && worst[2] < 1e-4;
  r.detail = std::to_string(cases) + " networks; max rel err weights " + fmt("%.2e", worst[0]) +
             ", stats " + fmt("%.2e", worst[1]) + ", frozen " + fmt("%.2e", worst[2]);
  return r;
}

// Two-pass per-feature mean and population variance with plain loops.
inline nn::BnStats naive_stats(const Matrix& y) {
  nn::BnStats s{Vector::Zero(y.cols()), Vector::Zero(y.cols())};
  for (Index f = 0; f < y.cols(); ++f) {
    double sum = 0.0;
    for (Index b = 0; b < y.rows(); ++b) sum += y(b, f);
    s.mean(f) = sum / static_cast<double>(y.rows());
    double sq = 0.0;
    for (Index b = 0; b < y.rows(); ++b) sq += (y(b, f) - s.mean(f)) * (y(b, f) - s.mean(f));
    s.variance(f) = sq / static_cast<double>(y.rows());
  }
  return s;
}

// Input to every BN layer of a whole-batch forward pass with batch statistics.
inline std::vector<Matrix> bn_inputs(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                                     const Matrix& x) {
  std::vector<Matrix> out;
  nn::ForwardPass pass(spec, params, x, false);
  while (pass.advance()) {
    out.push_back(pass.pending_input());
    pass.apply_bn();
  }
  return out;
}

inline CheckResult check_aggregation(int configs = 50) {
  CheckResult r{2, "aggregation exactness", true, "", 0.0};
  double worst = 0.0, worst_identity = 0.0;
  for (int k = 0; k < configs; ++k) {
    auto c = random_case(5000 + static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(9000 + static_cast<std::uint64_t>(k));
    const int n = std::uniform_int_distribution<int>(2, 5)(rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> shards;
    std::vector<double> sizes;
    Index total = 0;
    for (int i = 0; i < n; ++i) {
      const Index rows = std::uniform_int_distribution<int>(1, 20)(rng);
      // A per-client offset keeps the shards non-identically distributed.
      const double shift = 2.0 * normal(rng);
      Matrix m(rows, c.spec.input_dim);
      for (Index a = 0; a < rows; ++a)
        for (Index b = 0; b < m.cols(); ++b) m(a, b) = normal(rng) + shift;
      shards.push_back(m);
      sizes.push_back(static_cast<double>(rows));
      total += rows;
    }
    Matrix all(total, c.spec.input_dim);
    Index row = 0;
    for (const auto& m : shards) {
      all.middleRows(row, m.rows()) = m;
      row += m.rows();
    }
    std::vector<double> p;
    for (double s : sizes) p.push_back(s / static_cast<double>(total));

    fl::Transcript log;
    fl::SyncContext ctx;
    ctx.spec = &c.spec;
    for (int i = 0; i < n; ++i) ctx.models.push_back(&c.params);
    ctx.weights = p;
    ctx.transcript = &log;
    const auto synced = fl::fedtan_forward_sync(ctx, shards);

    const auto inputs = bn_inputs(c.spec, c.params, all);
    for (std::size_t l = 0; l < inputs.size(); ++l) {
      const auto oracle = naive_stats(inputs[l]);
      worst = std::max({worst, (synced.global_stats[l].mean - oracle.mean).cwiseAbs().maxCoeff(),
                        (synced.global_stats[l].variance - oracle.variance).cwiseAbs().maxCoeff()});
    }
    // First layer: the global variance decomposes into local variances plus mean offsets.
    Vector decomposed = Vector::Zero(inputs[0].cols());
    Index off = 0;
    for (int i = 0; i < n; ++i) {
      const auto local = naive_stats(inputs[0].middleRows(off, shards[static_cast<std::size_t>(i)].rows()));
      off += shards[static_cast<std::size_t>(i)].rows();
      decomposed += p[static_cast<std::size_t>(i)] *
                    (local.variance.array() + (local.mean - synced.global_stats[0].mean).array().square())
                        .matrix();
    }
    worst_identity =
        std::max(worst_identity, (decomposed - synced.global_stats[0].variance).cwiseAbs().maxCoeff());
  }
  r.passed = worst < 1e-12 && worst_identity < 1e-12;
  r.detail = std::to_string(configs) + " configurations; max |synced - union| " + fmt("%.2e", worst) +
             ", variance identity " + fmt("%.2e", worst_identity);
  return r;
}

// Two classes, each held by one client.
struct DisjointSetup {
  nn::NetworkSpec spec;
  data::LabeledDataset data;
  data::PartitionSpec partition;
};

inline DisjointSetup disjoint_setup(int clients = 2, bool batch_norm = true) {
  DisjointSetup s;
  s.data = data::synth_gaussian(clients, 40, 6, 77, {2.0, 1.0});
  s.partition = data::partition_by_label(s.data, static_cast<std::size_t>(clients), 1);
  s.spec = nn::NetworkSpec::mlp(6, {8, 6}, clients, batch_norm, nn::LayerKind::ReLU);
  return s;
}

inline fl::SchemeConfig full_batch_config(fl::Scheme scheme, int local_steps = 1) {
  fl::SchemeConfig c;
  c.scheme = scheme;
  c.local_steps = local_steps;
  c.batch_size = 0;
  c.lr = 0.1;
  c.seed = 3;
  return c;
}

inline CheckResult check_oracle_equivalence() {
  CheckResult r{3, "oracle equivalence", true, "", 0.0};
  const auto s = disjoint_setup();
  const auto oracle = full_batch_config(fl::Scheme::Centralized);
  const auto tan = check_equivalence(s.spec, full_batch_config(fl::Scheme::FedTAN), oracle, s.partition, s.data, 50);
  const auto avg = check_equivalence(s.spec, full_batch_config(fl::Scheme::FedAvgBN), oracle, s.partition, s.data, 10);
  const double tan_max = *std::max_element(tan.begin(), tan.end());
  const double avg_max = *std::max_element(avg.begin(), avg.end());
  r.passed = tan_max < 1e-10 && avg_max > 1e-3;
  r.detail = "fedtan vs centralized over 50 iterations " + fmt("%.2e", tan_max) +
             "; fedavg_bn vs centralized within 10 iterations " + fmt("%.2e", avg_max);
  return r;
}

// p-weighted sum of the clients' first-step gradients, optionally with backward sync.
inline Vector first_step_gradient(const DisjointSetup& s, const nn::ModelParams& w, bool sync_backward) {
  const auto shards = s.partition.materialize(s.data);
  fl::Transcript log;
  fl::SyncContext ctx;
  ctx.spec = &s.spec;
  for (std::size_t i = 0; i < shards.size(); ++i) ctx.models.push_back(&w);
  ctx.weights = s.partition.weights;
  ctx.transcript = &log;
  std::vector<Matrix> xs;
  std::vector<std::vector<int>> ys;
  for (const auto& d : shards) {
    xs.push_back(d.samples);
    ys.push_back(d.labels);
  }
  const auto fwd = fl::fedtan_forward_sync(ctx, xs);
  std::vector<Vector> grads;
  if (sync_backward) {
    for (const auto& b : fl::fedtan_backward_sync(ctx, fwd.caches, ys).results) grads.push_back(b.grads.flatten());
  } else {
    for (std::size_t i = 0; i < shards.size(); ++i)
      grads.push_back(nn::model_backward(s.spec, w, fwd.caches[i], ys[i]).grads.flatten());
  }
  return fl::weighted_sum(grads, ctx.weights);
}

inline CheckResult check_necessity() {
  CheckResult r{4, "necessity ablation", true, "", 0.0};
  const auto s = disjoint_setup(3);
  const auto w = nn::ModelParams::init(s.spec, 11);
  const Vector central = evaluate_union(s.spec, w, data::concatenate(s.partition.materialize(s.data))).gradient;
  const double forward_only = (first_step_gradient(s, w, false) - central).norm();
  const double both = (first_step_gradient(s, w, true) - central).norm();

  // Identical shards: every client holds the whole dataset.
  data::PartitionSpec same;
  std::vector<Index> everything(static_cast<std::size_t>(s.data.size()));
  std::iota(everything.begin(), everything.end(), Index{0});
  same.client_indices.assign(3, everything);
  same.assign_weights();
  const auto b_same = estimate_deviation(s.spec, w, same, s.data).b;
  const auto b_disjoint = estimate_deviation(s.spec, w, s.partition, s.data).b;
  const auto plain = disjoint_setup(3, false);
  const auto w_plain = nn::ModelParams::init(plain.spec, 11);
  const auto b_plain = estimate_deviation(plain.spec, w_plain, plain.partition, plain.data).b;

  const double same_max = *std::max_element(b_same.begin(), b_same.end());
  const double disjoint_min = *std::min_element(b_disjoint.begin(), b_disjoint.end());
  const double plain_max = *std::max_element(b_plain.begin(), b_plain.end());
  r.passed = forward_only > 1e-6 && both < 1e-10 && same_max < 1e-20 && disjoint_min > 0.0 && plain_max == 0.0;
  r.detail = "forward-only gap " + fmt("%.2e", forward_only) + " (full sync " + fmt("%.2e", both) +
             "); b_i identical max " + fmt("%.2e", same_max) + ", disjoint min " + fmt("%.2e", disjoint_min) +
             ", no-BN max " + fmt("%.2e", plain_max);
  return r;
}

inline CheckResult check_accounting() {
  CheckResult r{5, "communication accounting", true, "", 0.0};
  using metrics::format_mb;
  const auto bn = metrics::resnet20_size_spec();
  const auto gn = metrics::resnet20_gn_size_spec();
  const std::string tan = format_mb(metrics::per_iteration_bytes(bn, fl::Scheme::FedTAN));
  const std::string avg = format_mb(metrics::per_iteration_bytes(bn, fl::Scheme::FedAvgBN));
  const std::string plain = format_mb(metrics::per_iteration_bytes(gn, fl::Scheme::FedAvgBN));
  const auto deep = metrics::cumulative_accounting({fl::Scheme::FedTAN, 100, 0, 19}, bn);
  const auto shallow = metrics::cumulative_accounting({fl::Scheme::FedTAN, 100, 0, 1}, bn);
  const std::string f19 = metrics::format_percent(deep.extra_round_fraction());
  const std::string f1 = metrics::format_percent(shallow.extra_round_fraction());

  // The simulator's transcript must agree with the closed-form totals.
  const auto s = disjoint_setup(2);
  auto cfg = full_batch_config(fl::Scheme::FedTAN, 2);
  cfg.iterations = 3;
  auto fed = fl::make_federation(s.spec, cfg, s.partition, s.data);
  fl::Transcript all;
  for (int i = 0; i < cfg.iterations; ++i) all.append(fl::run_round(fed).transcript);
  const auto expect = metrics::cumulative_accounting(
      {fl::Scheme::FedTAN, 3, 0, static_cast<std::uint64_t>(s.spec.bn_layer_count())},
      metrics::size_of(fed.server.global, 2));
  const auto got = metrics::accounting_of(all);
  const bool sim_ok = got.bytes == expect.bytes && got.rounds == expect.rounds;

  r.passed = tan == "6.2679" && avg == "6.2049" && plain == "6.1734" && f19 == "98.28%" && f1 == "75.00%" && sim_ok;
  r.detail = "fedtan " + tan + " MB, fedavg_bn " + avg + " MB, plain " + plain + " MB; extra rounds L=19 " + f19 +
             ", L=1 " + f1 + "; transcript " + (sim_ok ? "matches" : "differs from") + " closed form";
  return r;
}

inline CheckResult check_moving_average() {
  CheckResult r{8, "moving-average law", true, "", 0.0};
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::ModelParams p;
  const Index f = 7;
  nn::BnStats s0{Vector(f), Vector(f)}, batch{Vector(f), Vector(f)};
  for (Index j = 0; j < f; ++j) {
    s0.mean(j) = normal(rng);
    s0.variance(j) = 1.0 + std::abs(normal(rng));
    batch.mean(j) = normal(rng);
    batch.variance(j) = 1.0 + std::abs(normal(rng));
  }
  p.running = {s0};
  const double rho = 0.1;
  double worst = 0.0;
  for (int t = 1; t <= 100; ++t) {
    p.update_running({batch}, rho);
    const double decay = std::pow(1.0 - rho, t);
    const Vector mean = decay * s0.mean + (1.0 - decay) * batch.mean;
    const Vector var = decay * s0.variance + (1.0 - decay) * batch.variance;
    worst = std::max({worst, (p.running[0].mean - mean).cwiseAbs().maxCoeff(),
                      (p.running[0].variance - var).cwiseAbs().maxCoeff()});
  }
  r.passed = worst < 1e-12;
  r.detail = "max deviation over 100 steps " + fmt("%.2e", worst);
  return r;
}

// MNIST desk-scale runs shared by the accuracy and FedTAN-II criteria.
struct MnistSuite {
  data::LabeledDataset train;
  data::LabeledDataset test;
  nn::NetworkSpec spec = nn::NetworkSpec::mnist();
  std::function<void(const std::string&)> progress;
  std::map<std::string, fl::History> runs;

  static MnistSuite load(const std::filesystem::path& root) {
    MnistSuite s;
    s.train = data::balanced_subset(
        data::load_mnist_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"), 600);
    s.test = data::load_mnist_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte");
    return s;
  }

  static fl::SchemeConfig config(fl::Scheme scheme) {
    fl::SchemeConfig c;
    c.scheme = scheme;
    c.local_steps = 5;
    c.iterations = 400;
    c.switch_iteration = 50;
    c.lr = 0.5;
    c.lr_after_switch = 0.05;
    c.batch_size = 128;
    c.momentum = 0.1;
    c.seed = 1;
    c.eval_every = 400;
    return c;
  }

  const fl::History& run(fl::Scheme scheme, bool iid) {
    const std::string key = std::string(fl::to_string(scheme)) + (iid ? "/iid" : "/label_shard");
    if (auto it = runs.find(key); it != runs.end()) return it->second;
    if (progress) progress(key);
    const auto cfg = config(scheme);
    const auto partition = iid ? data::partition_iid(train, 5, cfg.seed) : data::partition_by_label(train, 5, 2);
    fl::ExperimentOptions opts;
    opts.test = &test;
    return runs[key] = fl::run_experiment(spec, cfg, partition, train, opts);
  }

  double accuracy(fl::Scheme scheme, bool iid) { return 100.0 * run(scheme, iid).back().test_accuracy; }
};

inline CheckResult check_mnist(MnistSuite& m) {
  CheckResult r{6, "MNIST desk-scale accuracy", true, "", 0.0};
  const double central = m.accuracy(fl::Scheme::Centralized, false);
  const double tan = m.accuracy(fl::Scheme::FedTAN, false);
  const double avg = m.accuracy(fl::Scheme::FedAvgBN, false);
  const bool shard_ok = std::abs(tan - central) <= 3.0 && tan - avg >= 5.0;
  r.detail = "label_shard: centralized " + fmt("%.2f", central) + ", fedtan " + fmt("%.2f", tan) +
             ", fedavg_bn " + fmt("%.2f", avg) + "; iid:";

  const double central_iid = m.accuracy(fl::Scheme::Centralized, true);
  bool iid_ok = true;
  r.detail += " centralized " + fmt("%.2f", central_iid);
  for (fl::Scheme s : {fl::Scheme::FedAvgBN, fl::Scheme::FedTAN, fl::Scheme::FedTANII, fl::Scheme::FedAvgForwardSync,
                       fl::Scheme::FedBN, fl::Scheme::SiloBN}) {
    const double acc = m.accuracy(s, true);
    iid_ok = iid_ok && std::abs(acc - central_iid) <= 3.0;
    r.detail += ", " + std::string(fl::to_string(s)) + " " + fmt("%.2f", acc);
  }
  r.passed = shard_ok && iid_ok;
  return r;
}

inline CheckResult check_fedtan2(MnistSuite& m) {
  CheckResult r{7, "FedTAN-II", true, "", 0.0};
  const auto& tan = m.run(fl::Scheme::FedTAN, false).back();
  const auto& two = m.run(fl::Scheme::FedTANII, false).back();
  const auto cfg = MnistSuite::config(fl::Scheme::FedTANII);
  const std::uint64_t L = static_cast<std::uint64_t>(m.spec.bn_layer_count());
  const std::uint64_t R = static_cast<std::uint64_t>(cfg.iterations);
  const std::uint64_t M = static_cast<std::uint64_t>(cfg.switch_iteration);
  const std::uint64_t s = static_cast<std::uint64_t>(2 * m.spec.bn_features().front());
  const std::uint64_t expect_rounds = (3 * L + 1) * M + (R - M);
  const std::uint64_t expect_gap = 2 * s * (5 + 1) * 4 * (R - M);
  const double gap = 100.0 * std::abs(tan.test_accuracy - two.test_accuracy);
  r.passed = gap <= 3.0 && two.cum_rounds == expect_rounds && tan.cum_bytes - two.cum_bytes == expect_gap;
  r.detail = "accuracy fedtan " + fmt("%.2f", 100.0 * tan.test_accuracy) + ", fedtan2 " +
             fmt("%.2f", 100.0 * two.test_accuracy) + "; rounds " + std::to_string(two.cum_rounds) + " (expected " +
             std::to_string(expect_rounds) + "); byte gap " + std::to_string(tan.cum_bytes - two.cum_bytes) +
             " (expected " + std::to_string(expect_gap) + ")";
  return r;
}

template <class Fn>
CheckResult timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = fn();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::string report_line(const CheckResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + "  criterion " + std::to_string(r.id) + " (" + r.name +
         "): " + r.detail + " [" + fmt("%.1f", r.seconds) + " s]";
}

// Checks that need no external data.
inline std::vector<CheckResult> run_offline_checks() {
  return {timed([] { return check_gradients(); }), timed([] { return check_aggregation(); }),
          timed([] { return check_oracle_equivalence(); }), timed([] { return check_necessity(); }),
          timed([] { return check_accounting(); }), timed([] { return check_moving_average(); })};
}

}  // namespace fedtan::diag
