#include "minipipe/frame.hpp"

#include <cstring>
#include <numeric>

#include "minipipe/error.hpp"

namespace minipipe {

std::string_view to_string(FrameType type) {
  switch (type) {
    case FrameType::kData: return "DATA";
    case FrameType::kConfig: return "CONFIG";
    case FrameType::kEnd: return "END";
    case FrameType::kError: return "ERROR";
    case FrameType::kAck: return "ACK";
  }
  return "UNKNOWN";
}

std::array<std::byte, kFrameHeaderSize> FrameHeader::encode() const {
  std::array<std::byte, kFrameHeaderSize> out{};
  out[0] = std::byte{static_cast<std::uint8_t>(type)};
  out[1] = std::byte{slot_id};
  std::memcpy(out.data() + 2, &column_index, 2);
  std::memcpy(out.data() + 4, &payload_len, 4);
  std::memcpy(out.data() + 8, &sequence, 8);
  return out;
}

FrameHeader FrameHeader::decode(std::span<const std::byte, kFrameHeaderSize> bytes) {
  FrameHeader h;
  const auto type = std::to_integer<std::uint8_t>(bytes[0]);
  if (type < 1 || type > 5) {
    throw ProtocolError("unknown frame type " + std::to_string(type));
  }
  h.type = static_cast<FrameType>(type);
  h.slot_id = std::to_integer<std::uint8_t>(bytes[1]);
  std::memcpy(&h.column_index, bytes.data() + 2, 2);
  std::memcpy(&h.payload_len, bytes.data() + 4, 4);
  std::memcpy(&h.sequence, bytes.data() + 8, 8);
  if (h.payload_len > kMaxPayload) {
    throw ProtocolError("frame payload " + std::to_string(h.payload_len) +
                        " exceeds 65536 bytes (sequence " + std::to_string(h.sequence) + ")");
  }
  return h;
}

StreamFrame make_text_frame(FrameType type, std::uint8_t slot, std::uint64_t sequence,
                            std::string_view text) {
  StreamFrame f;
  f.header.type = type;
  f.header.slot_id = slot;
  f.header.column_index = kControlColumn;
  f.header.sequence = sequence;
  const auto n = std::min(text.size(), kMaxPayload);
  f.payload.resize(n);
  std::memcpy(f.payload.data(), text.data(), n);
  f.header.payload_len = static_cast<std::uint32_t>(n);
  return f;
}

std::size_t frame_payload_bytes(std::size_t element_width, std::size_t max_payload) {
  const std::size_t unit = std::lcm(kBeatBytes, element_width);
  return std::max<std::size_t>(1, max_payload / unit) * unit;
}

std::size_t frame_elements(std::size_t in_width, std::size_t out_width,
                           std::size_t max_payload) {
  const std::size_t widest = std::max(in_width, out_width);
  return std::max<std::size_t>(1, max_payload / (kBeatBytes * widest)) * kBeatBytes;
}

ColumnFramer::ColumnFramer(std::uint8_t slot, std::uint16_t column, std::size_t element_width,
                           SequenceCounter& sequence, Emit emit, std::size_t max_payload)
    : slot_(slot),
      column_(column),
      frame_bytes_(frame_payload_bytes(element_width, max_payload)),
      sequence_(sequence),
      emit_(std::move(emit)) {}

void ColumnFramer::push(std::span<const std::byte> bytes) {
  // Fast path: whole frames straight from the input when nothing is buffered.
  while (buffer_.empty() && bytes.size() >= frame_bytes_) {
    StreamFrame f;
    f.header = {FrameType::kData, slot_, column_, static_cast<std::uint32_t>(frame_bytes_),
                sequence_.next(slot_, column_)};
    f.payload.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(frame_bytes_));
    emit_(std::move(f));
    bytes = bytes.subspan(frame_bytes_);
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  while (buffer_.size() >= frame_bytes_) flush(frame_bytes_);
}

void ColumnFramer::finish() {
  if (!buffer_.empty()) flush(buffer_.size());
}

void ColumnFramer::flush(std::size_t n) {
  StreamFrame f;
  f.header = {FrameType::kData, slot_, column_, static_cast<std::uint32_t>(n),
              sequence_.next(slot_, column_)};
  if (n == buffer_.size()) {
    f.payload = std::move(buffer_);
    buffer_.clear();
  } else {
    f.payload.assign(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
  }
  emit_(std::move(f));
}

std::vector<StreamFrame> frame_batch(const ColumnBatch& batch, std::uint8_t slot,
                                     std::size_t max_payload) {
  batch.validate();
  const auto header = batch.header();
  std::vector<StreamFrame> frames;
  SequenceCounter seq;
  StreamFrame schema;
  const auto raw = header.encode();
  schema.header = {FrameType::kData, slot, kControlColumn,
                   static_cast<std::uint32_t>(raw.size()), seq.next(slot, kControlColumn)};
  schema.payload.assign(raw.begin(), raw.end());
  frames.push_back(std::move(schema));

  std::vector<std::byte> bytes;
  for (std::size_t c = 0; c < header.column_count(); ++c) {
    const std::size_t width = header.element_width(c);
    ColumnFramer framer(slot, static_cast<std::uint16_t>(c), width, seq,
                        [&](StreamFrame&& f) { frames.push_back(std::move(f)); }, max_payload);
    const std::uint64_t step = frame_payload_bytes(width, max_payload) / width;
    for (std::uint64_t r = 0; r < batch.row_count; r += step) {
      bytes.clear();
      append_column_bytes(batch, c, r, std::min(step, batch.row_count - r), bytes);
      framer.push(bytes);
    }
    framer.finish();
  }
  frames.push_back(make_text_frame(FrameType::kEnd, slot, seq.next(slot, kControlColumn), ""));
  return frames;
}

bool BatchAssembler::consume(const StreamFrame& frame) {
  if (done_) throw ProtocolError("frame after END");
  switch (frame.header.type) {
    case FrameType::kEnd:
      done_ = true;
      return true;
    case FrameType::kError:
      throw ProtocolError("stream carried ERROR: " + std::string(frame.text()));
    case FrameType::kData:
      break;
    default:
      throw ProtocolError("unexpected " + std::string(to_string(frame.header.type)) +
                          " frame in column stream");
  }
  if (frame.header.column_index == kControlColumn) {
    if (has_schema_) throw ProtocolError("duplicate schema frame");
    header_ = ColumnFileHeader::decode(frame.payload);
    batch_ = make_empty_batch(header_);
    has_schema_ = true;
    return false;
  }
  if (!has_schema_) throw ProtocolError("DATA frame before schema frame");
  const std::size_t c = frame.header.column_index;
  if (c >= header_.column_count() || c < column_) {
    throw ProtocolError("DATA frame for column " + std::to_string(c) + " out of order (sequence " +
                        std::to_string(frame.header.sequence) + ")");
  }
  const std::size_t width = header_.element_width(c);
  if (frame.payload.size() % width != 0) {
    throw ProtocolError("DATA frame splits an element (column " + std::to_string(c) +
                        ", sequence " + std::to_string(frame.header.sequence) + ")");
  }
  column_ = c;
  append_column_elements(batch_, c, frame.payload);
  return false;
}

ColumnBatch BatchAssembler::take() {
  if (!has_schema_) throw ProtocolError("column stream ended without a schema frame");
  if (!done_) throw ProtocolError("column stream ended without END");
  try {
    batch_.validate();
  } catch (const FormatError& e) {
    throw ProtocolError(std::string("reassembled batch is inconsistent: ") + e.what());
  }
  return std::move(batch_);
}

ColumnBatch deframe(std::span<const StreamFrame> frames) {
  BatchAssembler assembler;
  for (const auto& f : frames) assembler.consume(f);
  return assembler.take();
}

}  // namespace minipipe
