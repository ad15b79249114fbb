#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "fedtan/fl/protocol.hpp"
#include "fedtan/fl/scheme.hpp"
#include "fedtan/nn/network.hpp"

namespace fedtan::metrics {

inline constexpr double kBytesPerMB = 1024.0 * 1024.0;
inline constexpr double kBytesPerGB = 1024.0 * 1024.0 * 1024.0;

struct ModelSizeSpec {
  std::uint64_t total_params = 0;   // every exchanged scalar, statistics included
  std::uint64_t stat_params = 0;    // means and variances over all BN layers
  std::uint64_t clients = 0;
  std::uint64_t affine_params = 0;  // gamma and beta over all BN layers; only FedBN needs it

  void validate() const {
    if (total_params == 0 || clients == 0)
      throw std::invalid_argument("model size: parameter and client counts must be positive");
    if (stat_params + affine_params > total_params)
      throw std::invalid_argument("model size: BN parameters exceed the total");
  }
};

inline ModelSizeSpec size_of(const nn::ModelParams& params, std::uint64_t clients) {
  return {params.scalar_count(nn::kAllParams), params.scalar_count(nn::kRunningStats), clients,
          params.scalar_count(nn::kBnAffine)};
}

inline ModelSizeSpec resnet20_size_spec(std::uint64_t clients = 5) {
  return {271098, 2 * (16 * 7 + 32 * 6 + 64 * 6), clients, 0};
}

// ResNet-20 with group normalization: no statistics to exchange.
inline ModelSizeSpec resnet20_gn_size_spec(std::uint64_t clients = 5) { return {269722, 0, clients, 0}; }

namespace detail {
inline std::uint64_t wire(std::uint64_t scalars, const ModelSizeSpec& s) {
  return scalars * (s.clients + 1) * fl::kBytesPerScalar;
}
}  // namespace detail

// Model exchange per iteration: N uploads plus one broadcast.
inline std::uint64_t model_bytes(const ModelSizeSpec& s, fl::Scheme scheme) {
  switch (scheme) {
    case fl::Scheme::Centralized: return 0;
    case fl::Scheme::FedBN: return detail::wire(s.total_params - s.stat_params - s.affine_params, s);
    case fl::Scheme::SiloBN: return detail::wire(s.total_params - s.stat_params, s);
    default: return detail::wire(s.total_params, s);
  }
}

// Layer-wise aggregation per iteration: statistics forward, statistical gradients backward.
inline std::uint64_t layer_bytes(const ModelSizeSpec& s, fl::Scheme scheme) {
  switch (scheme) {
    case fl::Scheme::FedTAN:
    case fl::Scheme::FedTANII: return 2 * detail::wire(s.stat_params, s);
    case fl::Scheme::FedAvgForwardSync: return detail::wire(s.stat_params, s);
    default: return 0;
  }
}

// Bytes exchanged in one iteration. FedTAN-II is counted in its synced phase.
inline std::uint64_t per_iteration_bytes(const ModelSizeSpec& s, fl::Scheme scheme) {
  s.validate();
  return model_bytes(s, scheme) + layer_bytes(s, scheme);
}

inline std::string format_mb(std::uint64_t bytes) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(bytes) / kBytesPerMB);
  return buf;
}

inline std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

struct RunPlan {
  fl::Scheme scheme = fl::Scheme::FedTAN;
  std::uint64_t iterations = 0;  // R
  std::uint64_t switch_iteration = 0;  // M, FedTAN-II only
  std::uint64_t bn_layers = 0;   // L
};

struct Accounting {
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
  std::uint64_t layer_bytes = 0;
  std::uint64_t layer_rounds = 0;

  double extra_round_fraction() const {
    return rounds == 0 ? 0.0 : static_cast<double>(layer_rounds) / static_cast<double>(rounds);
  }
  double extra_byte_fraction() const {
    return bytes == 0 ? 0.0 : static_cast<double>(layer_bytes) / static_cast<double>(bytes);
  }
};

inline Accounting cumulative_accounting(const RunPlan& plan, const ModelSizeSpec& s) {
  s.validate();
  if (plan.scheme == fl::Scheme::FedTANII && plan.switch_iteration > plan.iterations)
    throw std::invalid_argument("accounting: switch iteration beyond the run");
  const std::uint64_t synced = plan.scheme == fl::Scheme::FedTANII ? plan.switch_iteration
                                                                   : plan.iterations;
  std::uint64_t layer_trips = 0;
  switch (plan.scheme) {
    case fl::Scheme::FedTAN:
    case fl::Scheme::FedTANII: layer_trips = 3 * plan.bn_layers; break;
    case fl::Scheme::FedAvgForwardSync: layer_trips = 2 * plan.bn_layers; break;
    default: break;
  }
  Accounting a;
  if (plan.scheme == fl::Scheme::Centralized) return a;
  a.layer_rounds = layer_trips * synced;
  a.rounds = plan.iterations + a.layer_rounds;
  a.layer_bytes = layer_bytes(s, plan.scheme) * synced;
  a.bytes = model_bytes(s, plan.scheme) * plan.iterations + a.layer_bytes;
  return a;
}

inline Accounting accounting_of(const fl::Transcript& t) {
  return {t.bytes(), t.rounds(), t.layer_bytes(), t.layer_rounds()};
}

}  // namespace fedtan::metrics
