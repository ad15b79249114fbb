#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedtan/data/dataset.hpp"

namespace fedtan::data {

struct PartitionSpec {
  std::vector<std::vector<Index>> client_indices;
  std::vector<double> weights;  // p_i = |D_i| / sum_j |D_j|

  std::size_t clients() const { return client_indices.size(); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& c : client_indices) n += c.size();
    return n;
  }

  // Recomputes p_i from the index lists.
  void assign_weights() {
    const double total_count = static_cast<double>(total());
    weights.clear();
    for (const auto& c : client_indices) weights.push_back(static_cast<double>(c.size()) / total_count);
  }

  std::vector<LabeledDataset> materialize(const LabeledDataset& ds) const {
    std::vector<LabeledDataset> out;
    out.reserve(client_indices.size());
    for (const auto& idx : client_indices) out.push_back(ds.subset(idx));
    return out;
  }

  std::set<int> label_set(const LabeledDataset& ds, std::size_t client) const {
    std::set<int> out;
    for (Index i : client_indices.at(client)) out.insert(ds.labels[static_cast<std::size_t>(i)]);
    return out;
  }
};

// Seeded shuffle then contiguous split; the first (count mod N) clients get one extra sample.
inline PartitionSpec partition_iid(const LabeledDataset& ds, std::size_t clients,
                                   std::uint64_t seed) {
  if (clients == 0) throw std::invalid_argument("partition_iid: client count must be positive");
  const auto count = static_cast<std::size_t>(ds.size());
  if (clients > count) throw std::invalid_argument("partition_iid: more clients than samples");

  std::vector<Index> order(count);
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  PartitionSpec spec;
  const std::size_t base = count / clients;
  const std::size_t extra = count % clients;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < clients; ++i) {
    const std::size_t n = base + (i < extra ? 1 : 0);
    spec.client_indices.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                     order.begin() + static_cast<std::ptrdiff_t>(cursor + n));
    cursor += n;
  }
  spec.assign_weights();
  return spec;
}

// Classes held by `client` under the wrap-around shard layout: k consecutive labels
// starting at client * (C / N), modulo C.
inline std::vector<int> shard_classes(std::size_t client, std::size_t clients, int class_count,
                                      int classes_per_client) {
  const int stride = class_count / static_cast<int>(clients);
  std::vector<int> out;
  for (int j = 0; j < classes_per_client; ++j)
    out.push_back((static_cast<int>(client) * stride + j) % class_count);
  return out;
}

// Label-shard non-i.i.d. split. Samples of a class shared by several clients are divided
// evenly among them in client order (remainder to the earliest).
inline PartitionSpec partition_by_label(const LabeledDataset& ds, std::size_t clients,
                                        int classes_per_client) {
  const int C = ds.class_count;
  if (clients == 0 || classes_per_client < 1 || classes_per_client > C ||
      C % static_cast<int>(clients) != 0 ||
      static_cast<int>(clients) * classes_per_client < C)
    throw std::invalid_argument("partition_by_label: incompatible combination N=" +
                                std::to_string(clients) + " k=" +
                                std::to_string(classes_per_client) + " C=" + std::to_string(C));

  std::vector<std::vector<std::size_t>> holders(static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < clients; ++i)
    for (int c : shard_classes(i, clients, C, classes_per_client))
      holders[static_cast<std::size_t>(c)].push_back(i);

  PartitionSpec spec;
  spec.client_indices.resize(clients);
  for (int c = 0; c < C; ++c) {
    const auto members = ds.indices_of_class(c);
    const auto& who = holders[static_cast<std::size_t>(c)];
    const std::size_t base = members.size() / who.size();
    const std::size_t extra = members.size() % who.size();
    std::size_t cursor = 0;
    for (std::size_t h = 0; h < who.size(); ++h) {
      const std::size_t n = base + (h < extra ? 1 : 0);
      auto& dst = spec.client_indices[who[h]];
      dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(cursor),
                 members.begin() + static_cast<std::ptrdiff_t>(cursor + n));
      cursor += n;
    }
  }
  for (auto& idx : spec.client_indices) {
    std::sort(idx.begin(), idx.end());
    if (idx.empty()) throw std::invalid_argument("partition_by_label: a client received no samples");
  }
  spec.assign_weights();
  return spec;
}

}  // namespace fedtan::data
