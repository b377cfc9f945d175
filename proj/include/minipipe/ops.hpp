#pragma once
// The six feature transformation operators.
//
//   dense:  neg2zero, logarithm
//   sparse: hex2int -> modulus -> vocab_gen / vocab_map

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "minipipe/error.hpp"

namespace minipipe {

/// Negative and NaN inputs become 0.0; everything else passes through.
inline float neg2zero(float x) noexcept { return (x >= 0.0f) ? x : 0.0f; }

/// ln(x + 1) evaluated in double precision and rounded to float.
/// Requires x >= 0; the checked variant reports the row.
inline float logarithm_unchecked(float x) noexcept {
  return static_cast<float>(std::log(static_cast<double>(x) + 1.0));
}

float logarithm(float x, std::uint64_t row = 0);

/// Parses a fixed-width hex token, most significant character first.
/// Throws ParseError with the row and offending character position.
std::uint64_t hex2int(std::string_view token, std::uint64_t row = 0);

/// Lower-case, zero-padded hex rendering of `value` in exactly `width` characters.
std::string format_hex(std::uint64_t value, unsigned width);

/// v mod M. Throws ParamError for M == 0.
std::uint64_t modulus(std::uint64_t v, std::uint64_t m);

/// ((v mod M) + M) mod M, the non-negative remainder for signed sources.
std::int64_t positive_modulus(std::int64_t v, std::int64_t m);

/// Insertion-ordered value -> index mapping over keys in [0, M).
///
/// Keys below kDenseLimit are kept in a dense M-slot array; larger ranges
/// fall back to a hash map. Behaviour is identical either way.
class VocabTable {
 public:
  static constexpr std::uint32_t kAbsent = 0xFFFFFFFFu;
  static constexpr std::uint64_t kDenseLimit = 1ull << 24;

  explicit VocabTable(std::uint64_t modulus_range);

  std::uint64_t modulus_range() const { return range_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  bool frozen() const { return frozen_; }

  /// Index for `value`, inserting it at index size() on first sight.
  /// Throws RangeError when value >= M, CapabilityError when frozen.
  std::uint32_t insert(std::uint64_t value, std::uint64_t row = 0) {
    if (value >= range_) throw_out_of_range(value, row);
    if (frozen_) throw CapabilityError("vocabulary table is frozen");
    if (dense_) {
      std::uint32_t& slot = slots_[value];
      if (slot == kAbsent) {
        slot = static_cast<std::uint32_t>(keys_.size());
        keys_.push_back(value);
      }
      return slot;
    }
    return insert_sparse(value);
  }

  std::optional<std::uint32_t> find(std::uint64_t value) const {
    if (value >= range_) return std::nullopt;
    if (dense_) {
      const std::uint32_t slot = slots_[value];
      return slot == kAbsent ? std::nullopt : std::optional(slot);
    }
    const auto it = map_.find(value);
    return it == map_.end() ? std::nullopt : std::optional(it->second);
  }

  /// Keys in index order: keys()[i] is the value mapped to i.
  const std::vector<std::uint64_t>& keys() const { return keys_; }

  void freeze() { frozen_ = true; }

  friend bool operator==(const VocabTable& a, const VocabTable& b) {
    return a.range_ == b.range_ && a.keys_ == b.keys_;
  }

 private:
  [[noreturn]] void throw_out_of_range(std::uint64_t value, std::uint64_t row) const;
  std::uint32_t insert_sparse(std::uint64_t value);

  std::uint64_t range_;
  bool dense_;
  bool frozen_ = false;
  std::vector<std::uint32_t> slots_;
  std::unordered_map<std::uint64_t, std::uint32_t> map_;
  std::vector<std::uint64_t> keys_;
};

/// Single pass, first appearance order.
VocabTable vocab_gen(std::span<const std::uint64_t> values, std::uint64_t modulus_range);

/// Extends an existing table with more of the same stream.
void vocab_gen_into(VocabTable& table, std::span<const std::uint64_t> values,
                    std::uint64_t first_row = 0);

struct VocabMapOptions {
  /// When set, unseen values map to table.size() instead of failing.
  bool out_of_vocabulary_bucket = false;
};

std::vector<std::uint32_t> vocab_map(std::span<const std::uint64_t> values,
                                     const VocabTable& table, VocabMapOptions options = {});

}  // namespace minipipe
