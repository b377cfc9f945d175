#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "minipipe/frame.hpp"

namespace minipipe {

/// Demultiplexes an interleaved frame stream by slot_id.
///
/// Every (slot, column) pair is an independent sequence starting at
/// `first_sequence`. Frames that arrive early, by less than `window`
/// positions, are held and released once the gap closes. Anything further
/// ahead, or a repeat of an already delivered sequence, is a ProtocolError.
class Arbiter {
 public:
  explicit Arbiter(std::size_t window, std::uint64_t first_sequence = kFirstSequence);

  /// Routes one frame. Returns how many frames became deliverable.
  std::size_t push(StreamFrame frame);

  /// Starts the (slot, column) substream at `next` instead of first_sequence.
  /// Only valid before the substream has seen a frame.
  void expect(std::uint8_t slot, std::uint16_t column, std::uint64_t next);

  /// Pops the next in-order frame for `slot`, if any.
  std::optional<StreamFrame> pop(std::uint8_t slot);
  std::vector<StreamFrame> drain(std::uint8_t slot);

  /// Throws ProtocolError if frames are still waiting on a gap.
  void finish() const;

  std::size_t pending() const;
  std::size_t window() const { return window_; }

 private:
  struct Substream {
    std::uint64_t expected;
    std::map<std::uint64_t, StreamFrame> held;
  };

  std::size_t window_;
  std::uint64_t first_;
  std::map<std::pair<std::uint8_t, std::uint16_t>, Substream> streams_;
  std::map<std::uint8_t, std::deque<StreamFrame>> ready_;
};

}  // namespace minipipe
