#include "minipipe/ops.hpp"

namespace minipipe {

float logarithm(float x, std::uint64_t row) {
  if (!(x >= 0.0f)) {
    throw DomainError("logarithm undefined for " + std::to_string(x) + " at row " +
                          std::to_string(row),
                      row);
  }
  return logarithm_unchecked(x);
}

std::uint64_t hex2int(std::string_view token, std::uint64_t row) {
  if (token.empty() || token.size() > 16) {
    throw ParseError("hex token width " + std::to_string(token.size()) + " outside [1, 16]", row,
                     0);
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < token.size(); ++i) {
    const char c = token[i];
    std::uint64_t digit;
    if (c >= '0' && c <= '9') {
      digit = static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      digit = static_cast<std::uint64_t>(c - 'a' + 10);
    } else if (c >= 'A' && c <= 'F') {
      digit = static_cast<std::uint64_t>(c - 'A' + 10);
    } else {
      throw ParseError("non-hex character at row " + std::to_string(row) + " position " +
                           std::to_string(i),
                       row, i);
    }
    v = (v << 4) | digit;
  }
  return v;
}

std::string format_hex(std::uint64_t value, unsigned width) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(width, '0');
  for (unsigned i = width; i-- > 0 && value != 0;) {
    out[i] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

std::uint64_t modulus(std::uint64_t v, std::uint64_t m) {
  if (m == 0) throw ParamError("modulus must be >= 1");
  return v % m;
}

std::int64_t positive_modulus(std::int64_t v, std::int64_t m) {
  if (m <= 0) throw ParamError("modulus must be >= 1");
  return ((v % m) + m) % m;
}

VocabTable::VocabTable(std::uint64_t modulus_range)
    : range_(modulus_range), dense_(modulus_range <= kDenseLimit) {
  if (range_ == 0) throw ParamError("vocabulary modulus range must be >= 1");
  if (dense_) slots_.assign(range_, kAbsent);
}

void VocabTable::throw_out_of_range(std::uint64_t value, std::uint64_t row) const {
  throw RangeError("value " + std::to_string(value) + " at row " + std::to_string(row) +
                       " is outside the vocabulary range " + std::to_string(range_) +
                       " (missing upstream modulus?)",
                   row);
}

std::uint32_t VocabTable::insert_sparse(std::uint64_t value) {
  const auto [it, inserted] = map_.try_emplace(value, static_cast<std::uint32_t>(keys_.size()));
  if (inserted) keys_.push_back(value);
  return it->second;
}

VocabTable vocab_gen(std::span<const std::uint64_t> values, std::uint64_t modulus_range) {
  VocabTable table(modulus_range);
  vocab_gen_into(table, values);
  return table;
}

void vocab_gen_into(VocabTable& table, std::span<const std::uint64_t> values,
                    std::uint64_t first_row) {
  for (std::size_t i = 0; i < values.size(); ++i) table.insert(values[i], first_row + i);
}

std::vector<std::uint32_t> vocab_map(std::span<const std::uint64_t> values,
                                     const VocabTable& table, VocabMapOptions options) {
  std::vector<std::uint32_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto idx = table.find(values[i]);
    if (idx) {
      out[i] = *idx;
    } else if (options.out_of_vocabulary_bucket) {
      out[i] = static_cast<std::uint32_t>(table.size());
    } else {
      throw UnknownValueError("value " + std::to_string(values[i]) + " at row " +
                                  std::to_string(i) + " is not in the vocabulary",
                              values[i], i);
    }
  }
  return out;
}

}  // namespace minipipe
