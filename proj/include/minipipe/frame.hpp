#pragma once
// 64-byte-beat wire frames.
//
// Header (16 bytes, little-endian):
//   0  u8   frame_type   DATA=1 CONFIG=2 END=3 ERROR=4 ACK=5
//   1  u8   slot_id
//   2  u16  column_index (kControlColumn for control and schema frames)
//   4  u32  payload_len  (<= 65536)
//   8  u64  sequence     (starts at 1, +1 per frame for each
//                         (slot, column, direction))
//
// A column stream is: DATA on kControlColumn carrying the 24-byte column
// file header, then DATA frames per column in column order, then END.
// DATA payloads hold whole elements and are multiples of 64 bytes except
// for the last frame of a column.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "minipipe/colfmt.hpp"

namespace minipipe {

enum class FrameType : std::uint8_t {
  kData = 1,
  kConfig = 2,
  kEnd = 3,
  kError = 4,
  kAck = 5,
};

std::string_view to_string(FrameType type);

inline constexpr std::size_t kFrameHeaderSize = 16;
inline constexpr std::size_t kBeatBytes = 64;
inline constexpr std::size_t kMaxPayload = 65536;
inline constexpr std::uint16_t kControlColumn = 0xFFFF;
inline constexpr std::uint64_t kFirstSequence = 1;
/// ERROR payloads starting with this tag signal an oversubscribed server.
inline constexpr std::string_view kBusyTag = "BUSY";

struct FrameHeader {
  FrameType type = FrameType::kData;
  std::uint8_t slot_id = 0;
  std::uint16_t column_index = 0;
  std::uint32_t payload_len = 0;
  std::uint64_t sequence = 0;

  std::array<std::byte, kFrameHeaderSize> encode() const;
  /// Throws ProtocolError on an unknown type or oversized payload.
  static FrameHeader decode(std::span<const std::byte, kFrameHeaderSize> bytes);

  bool operator==(const FrameHeader&) const = default;
};

struct StreamFrame {
  FrameHeader header;
  std::vector<std::byte> payload;

  std::string_view text() const {
    return {reinterpret_cast<const char*>(payload.data()), payload.size()};
  }
  bool operator==(const StreamFrame&) const = default;
};

StreamFrame make_text_frame(FrameType type, std::uint8_t slot, std::uint64_t sequence,
                            std::string_view text);

/// Sequence numbers per (slot, column) for one direction.
class SequenceCounter {
 public:
  std::uint64_t next(std::uint8_t slot, std::uint16_t column) {
    auto [it, inserted] = next_.try_emplace({slot, column}, kFirstSequence);
    return it->second++;
  }

 private:
  std::map<std::pair<std::uint8_t, std::uint16_t>, std::uint64_t> next_;
};

/// Largest payload <= max_payload that is a multiple of both 64 bytes and
/// `element_width`.
std::size_t frame_payload_bytes(std::size_t element_width, std::size_t max_payload = kMaxPayload);

/// Number of elements per full frame such that neither the input (width
/// `in_width`) nor an output of width `out_width` exceeds max_payload, and
/// both are multiples of 64 bytes.
std::size_t frame_elements(std::size_t in_width, std::size_t out_width,
                           std::size_t max_payload = kMaxPayload);

/// Accumulates element bytes for one column and emits DATA frames of
/// frame_payload_bytes(width) each, plus a short final frame on finish().
class ColumnFramer {
 public:
  using Emit = std::function<void(StreamFrame&&)>;

  ColumnFramer(std::uint8_t slot, std::uint16_t column, std::size_t element_width,
               SequenceCounter& sequence, Emit emit, std::size_t max_payload = kMaxPayload);

  void push(std::span<const std::byte> bytes);
  void finish();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  void flush(std::size_t bytes);

  std::uint8_t slot_;
  std::uint16_t column_;
  std::size_t frame_bytes_;
  SequenceCounter& sequence_;
  Emit emit_;
  std::vector<std::byte> buffer_;
};

/// Schema frame + per-column DATA frames + END for an in-memory batch.
std::vector<StreamFrame> frame_batch(const ColumnBatch& batch, std::uint8_t slot = 0,
                                     std::size_t max_payload = kMaxPayload);

/// Inverse of frame_batch. Throws ProtocolError on malformed streams.
ColumnBatch deframe(std::span<const StreamFrame> frames);

/// Incrementally rebuilds a batch from schema and DATA frames.
class BatchAssembler {
 public:
  /// Consumes one frame; returns true once END has been seen.
  bool consume(const StreamFrame& frame);
  bool has_schema() const { return has_schema_; }
  const ColumnFileHeader& header() const { return header_; }
  /// Throws ProtocolError if the stream is incomplete.
  ColumnBatch take();

 private:
  bool has_schema_ = false;
  bool done_ = false;
  ColumnFileHeader header_;
  ColumnBatch batch_;
  std::size_t column_ = 0;
};

}  // namespace minipipe
