#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fedtan::fl {

enum class Direction { Up, Down };

enum class MessageKind {
  GlobalModel,
  LocalModel,
  LayerMeanUp,
  LayerMeanDown,
  LayerVarUp,
  LayerVarDown,
  LayerStatGradUp,
  LayerStatGradDown,
};

inline constexpr std::size_t kBytesPerScalar = 4;  // 32-bit floats on the wire
inline constexpr int kNoLayer = -1;
inline constexpr int kBroadcast = -1;

// One server<->client transfer. Downlink messages are broadcasts and are recorded once.
struct Message {
  Direction direction = Direction::Down;
  MessageKind kind = MessageKind::GlobalModel;
  int layer = kNoLayer;   // 0-based BN layer, where applicable
  int client = kBroadcast;
  std::size_t scalars = 0;
  int iteration = 0;

  std::size_t bytes() const { return kBytesPerScalar * scalars; }
};

inline std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::GlobalModel: return "GlobalModel";
    case MessageKind::LocalModel: return "LocalModel";
    case MessageKind::LayerMeanUp: return "LayerMeanUp";
    case MessageKind::LayerMeanDown: return "LayerMeanDown";
    case MessageKind::LayerVarUp: return "LayerVarUp";
    case MessageKind::LayerVarDown: return "LayerVarDown";
    case MessageKind::LayerStatGradUp: return "LayerStatGradUp";
    case MessageKind::LayerStatGradDown: return "LayerStatGradDown";
  }
  return "?";
}

inline bool is_layer_aggregation(MessageKind k) {
  return k != MessageKind::GlobalModel && k != MessageKind::LocalModel;
}

// Ordered log of every exchange. A round-trip is one broadcast plus its matching uploads,
// so the round count equals the number of downlink messages.
class Transcript {
 public:
  void record(const Message& m) { messages_.push_back(m); }
  void append(const Transcript& other) {
    messages_.insert(messages_.end(), other.messages_.begin(), other.messages_.end());
  }

  const std::vector<Message>& messages() const { return messages_; }
  bool empty() const { return messages_.empty(); }

  std::size_t rounds() const { return count_if([](const Message& m) { return m.direction == Direction::Down; }); }
  std::size_t layer_rounds() const {
    return count_if([](const Message& m) {
      return m.direction == Direction::Down && is_layer_aggregation(m.kind);
    });
  }
  std::uint64_t bytes() const {
    std::uint64_t n = 0;
    for (const auto& m : messages_) n += m.bytes();
    return n;
  }
  std::uint64_t layer_bytes() const {
    std::uint64_t n = 0;
    for (const auto& m : messages_)
      if (is_layer_aggregation(m.kind)) n += m.bytes();
    return n;
  }

  friend bool operator==(const Transcript& a, const Transcript& b) {
    if (a.messages_.size() != b.messages_.size()) return false;
    for (std::size_t i = 0; i < a.messages_.size(); ++i) {
      const auto& x = a.messages_[i];
      const auto& y = b.messages_[i];
      if (x.direction != y.direction || x.kind != y.kind || x.layer != y.layer ||
          x.client != y.client || x.scalars != y.scalars || x.iteration != y.iteration)
        return false;
    }
    return true;
  }

 private:
  template <class Pred>
  std::size_t count_if(Pred p) const {
    std::size_t n = 0;
    for (const auto& m : messages_) n += p(m) ? 1 : 0;
    return n;
  }

  std::vector<Message> messages_;
};

}  // namespace fedtan::fl
