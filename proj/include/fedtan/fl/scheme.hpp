#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fedtan/nn/network.hpp"

namespace fedtan::fl {

enum class Scheme { FedAvgBN, FedTAN, FedTANII, FedAvgForwardSync, FedBN, SiloBN, Centralized };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::FedAvgBN: return "fedavg_bn";
    case Scheme::FedTAN: return "fedtan";
    case Scheme::FedTANII: return "fedtan2";
    case Scheme::FedAvgForwardSync: return "fedavg_fwdsync";
    case Scheme::FedBN: return "fedbn";
    case Scheme::SiloBN: return "silobn";
    case Scheme::Centralized: return "centralized";
  }
  return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::FedAvgBN, Scheme::FedTAN, Scheme::FedTANII, Scheme::FedAvgForwardSync,
                   Scheme::FedBN, Scheme::SiloBN, Scheme::Centralized})
    if (to_string(s) == name) return s;
  return std::nullopt;
}

struct SchemeConfig {
  Scheme scheme = Scheme::FedTAN;
  int local_steps = 5;        // E
  int iterations = 400;       // R
  int switch_iteration = 50;  // M, FedTAN-II only
  double lr = 0.5;
  double lr_after_switch = 0.05;
  int lr_drop_at = 0;   // other schemes: drop to lr_after_switch after this iteration; 0 = never
  int batch_size = 128;  // 0 = full local dataset every step
  double momentum = 0.1;  // rho, moving-average momentum
  std::uint64_t seed = 1;
  bool parallel = false;
  int eval_every = 1;

  bool full_batch() const { return batch_size == 0; }

  void validate() const {
    if (local_steps < 1) throw std::invalid_argument("scheme: local_steps must be >= 1");
    if (iterations < 0) throw std::invalid_argument("scheme: iterations must be >= 0");
    if (!(momentum > 0.0 && momentum <= 1.0))
      throw std::invalid_argument("scheme: momentum must lie in (0, 1]");
    if (batch_size < 0) throw std::invalid_argument("scheme: batch_size must be >= 0");
    if (!(lr >= 0.0) || !(lr_after_switch >= 0.0))
      throw std::invalid_argument("scheme: learning rates must be non-negative");
    if (eval_every < 1) throw std::invalid_argument("scheme: eval_every must be >= 1");
    if (scheme == Scheme::FedTANII && !(switch_iteration >= 0 && switch_iteration < iterations))
      throw std::invalid_argument("scheme: fedtan2 requires 0 <= switch_iteration < iterations");
  }

  // Learning rate for 1-based iteration r.
  double lr_at(int r) const {
    if (scheme == Scheme::FedTANII) return r <= switch_iteration ? lr : lr_after_switch;
    if (lr_drop_at > 0 && r > lr_drop_at) return lr_after_switch;
    return lr;
  }

  // FedTAN-II past its switch point: statistics frozen at S_bar_M.
  bool stats_frozen(int r) const { return scheme == Scheme::FedTANII && r > switch_iteration; }

  bool syncs_forward(int r) const {
    return scheme == Scheme::FedTAN || scheme == Scheme::FedAvgForwardSync ||
           (scheme == Scheme::FedTANII && r <= switch_iteration);
  }
  bool syncs_backward(int r) const { return syncs_forward(r) && scheme != Scheme::FedAvgForwardSync; }

  // Model parts the server broadcasts and clients upload.
  unsigned exchanged_groups() const {
    switch (scheme) {
      case Scheme::FedBN: return nn::kDenseParams;
      case Scheme::SiloBN: return nn::kGradientParams;
      default: return nn::kAllParams;
    }
  }

  // Model parts the server averages at iteration r.
  unsigned aggregated_groups(int r) const {
    if (stats_frozen(r)) return nn::kGradientParams;
    return exchanged_groups();
  }
};

}  // namespace fedtan::fl
