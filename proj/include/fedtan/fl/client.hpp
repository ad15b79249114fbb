#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "fedtan/data/dataset.hpp"
#include "fedtan/nn/network.hpp"

namespace fedtan::fl {

// Epoch-wise shuffled mini-batches of a fixed size; the tail that does not fill a batch
// is skipped before reshuffling. batch_size 0 yields the whole dataset in order.
class BatchSampler {
 public:
  BatchSampler(Index count, int batch_size, std::uint64_t seed)
      : order_(static_cast<std::size_t>(count)), batch_(batch_size), rng_(seed) {
    std::iota(order_.begin(), order_.end(), Index{0});
    if (batch_ > 0) {
      batch_ = std::min<int>(batch_, static_cast<int>(count));
      std::shuffle(order_.begin(), order_.end(), rng_);
    }
  }

  std::vector<Index> next() {
    if (batch_ == 0) return order_;
    const auto b = static_cast<std::size_t>(batch_);
    if (cursor_ + b > order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    std::vector<Index> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                           order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + b));
    cursor_ += b;
    return out;
  }

 private:
  std::vector<Index> order_;
  int batch_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
};

struct Batch {
  Matrix x;
  std::vector<int> y;
};

struct ClientState {
  int id = 0;
  data::LabeledDataset data;
  nn::ModelParams model;  // local w_i and moving-average S_bar_i
  BatchSampler sampler;

  Batch next_batch() {
    const auto idx = sampler.next();
    auto sub = data.subset(idx);
    return {std::move(sub.samples), std::move(sub.labels)};
  }
};

// Runs fn(i) for every client, optionally on one thread per client. Results must be
// written to per-client slots so the outcome is independent of scheduling.
inline void for_each_client(std::size_t n, bool parallel, const std::function<void(std::size_t)>& fn) {
  if (!parallel || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> workers;
    workers.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      workers.emplace_back([&, i] {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fedtan::fl
