#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <utility>

#include "fedtan/cli/config.hpp"
#include "fedtan/data/idx.hpp"
#include "fedtan/data/partition.hpp"
#include "fedtan/data/synthetic.hpp"
#include "fedtan/fl/simulator.hpp"

namespace fedtan::cli {

struct TrainTest {
  data::LabeledDataset train;
  data::LabeledDataset test;
};

inline TrainTest load_mnist(const std::filesystem::path& root, long long subset, long long test_subset) {
  for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                        "t10k-labels-idx1-ubyte"})
    if (!std::filesystem::exists(root / f))
      throw ConfigError("dataset.root", "missing " + (root / f).string());
  TrainTest out{data::load_mnist_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"),
                data::load_mnist_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte")};
  if (subset > 0) out.train = data::balanced_subset(out.train, subset / out.train.class_count);
  if (test_subset > 0) out.test = data::balanced_subset(out.test, test_subset / out.test.class_count);
  return out;
}

// Train and test rows drawn around the same class centres.
inline TrainTest synthetic_split(const DatasetConfig& d, std::uint64_t seed) {
  const Index per = d.per_class + d.test_per_class;
  const auto all = data::synth_gaussian(d.classes, per, d.input_dim, seed, {d.center_scale, d.noise});
  std::vector<Index> train_rows, test_rows;
  for (Index c = 0; c < d.classes; ++c)
    for (Index k = 0; k < per; ++k) (k < d.per_class ? train_rows : test_rows).push_back(c * per + k);
  return {all.subset(train_rows), all.subset(test_rows)};
}

inline TrainTest load_data(const ExperimentConfig& c) {
  if (c.dataset.kind == DatasetKind::Mnist)
    return load_mnist(c.dataset.root, c.dataset.subset, c.dataset.test_subset);
  return synthetic_split(c.dataset, c.scheme.seed);
}

inline data::PartitionSpec make_partition(const ExperimentConfig& c, const data::LabeledDataset& train) {
  const auto n = static_cast<std::size_t>(c.partition.clients);
  if (c.partition.kind == PartitionKind::Iid) return data::partition_iid(train, n, c.scheme.seed);
  return data::partition_by_label(train, n, c.partition.classes_per_client);
}

inline nn::NetworkSpec make_network(const ExperimentConfig& c, const data::LabeledDataset& train) {
  std::vector<Index> hidden(c.model.hidden.begin(), c.model.hidden.end());
  auto spec = nn::NetworkSpec::mlp(train.input_dim(), hidden, train.class_count, c.model.batch_norm);
  spec.epsilon = c.model.epsilon;
  return spec;
}

using RoundObserver = std::function<void(const fl::Federation&, const fl::RoundResult&)>;

inline fl::History run_config(const ExperimentConfig& c, const TrainTest& data, RoundObserver observer = {}) {
  const auto partition = make_partition(c, data.train);
  const auto spec = make_network(c, data.train);
  fl::ExperimentOptions opts;
  opts.test = &data.test;
  opts.record_wall_time = c.timing;
  opts.on_round = std::move(observer);
  return fl::run_experiment(spec, c.scheme, partition, data.train, opts);
}

inline fl::History run_config(const ExperimentConfig& c, RoundObserver observer = {}) {
  return run_config(c, load_data(c), std::move(observer));
}

}  // namespace fedtan::cli
