#include "minipipe/arbiter.hpp"

#include "minipipe/error.hpp"

namespace minipipe {

Arbiter::Arbiter(std::size_t window, std::uint64_t first_sequence)
    : window_(window), first_(first_sequence) {
  if (window_ == 0) throw ParamError("arbiter window must be >= 1");
}

std::size_t Arbiter::push(StreamFrame frame) {
  const auto slot = frame.header.slot_id;
  const auto key = std::make_pair(slot, frame.header.column_index);
  auto& s = streams_.try_emplace(key, Substream{first_, {}}).first->second;
  const auto seq = frame.header.sequence;
  auto where = [&] {
    return " (slot " + std::to_string(slot) + ", column " +
           std::to_string(frame.header.column_index) + ")";
  };
  if (seq < s.expected || s.held.contains(seq)) {
    throw ProtocolError("duplicate sequence " + std::to_string(seq) + where());
  }
  if (seq >= s.expected + window_) {
    throw ProtocolError("sequence gap: expected=" + std::to_string(s.expected) +
                        " actual=" + std::to_string(seq) + where());
  }
  auto& out = ready_[slot];
  std::size_t released = 0;
  if (seq != s.expected) {
    s.held.emplace(seq, std::move(frame));
    return 0;
  }
  out.push_back(std::move(frame));
  ++s.expected;
  ++released;
  for (auto it = s.held.find(s.expected); it != s.held.end(); it = s.held.find(s.expected)) {
    out.push_back(std::move(it->second));
    s.held.erase(it);
    ++s.expected;
    ++released;
  }
  return released;
}

void Arbiter::expect(std::uint8_t slot, std::uint16_t column, std::uint64_t next) {
  const auto [it, inserted] = streams_.try_emplace({slot, column}, Substream{next, {}});
  if (!inserted) throw ProtocolError("substream already started");
}

std::optional<StreamFrame> Arbiter::pop(std::uint8_t slot) {
  auto it = ready_.find(slot);
  if (it == ready_.end() || it->second.empty()) return std::nullopt;
  StreamFrame f = std::move(it->second.front());
  it->second.pop_front();
  return f;
}

std::vector<StreamFrame> Arbiter::drain(std::uint8_t slot) {
  std::vector<StreamFrame> out;
  while (auto f = pop(slot)) out.push_back(std::move(*f));
  return out;
}

void Arbiter::finish() const {
  for (const auto& [key, s] : streams_) {
    if (!s.held.empty()) {
      throw ProtocolError("sequence gap at end of stream: expected=" +
                          std::to_string(s.expected) + " actual=" +
                          std::to_string(s.held.begin()->first) + " (slot " +
                          std::to_string(key.first) + ", column " + std::to_string(key.second) +
                          ")");
    }
  }
}

std::size_t Arbiter::pending() const {
  std::size_t n = 0;
  for (const auto& [key, s] : streams_) n += s.held.size();
  return n;
}

}  // namespace minipipe
