#include <cmath>
#include <cstring>
#include <limits>

#include "minipipe/colfmt.hpp"
#include "minipipe/error.hpp"

namespace minipipe {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t token_space(unsigned width) {
  return width >= 16 ? std::numeric_limits<std::uint64_t>::max() : (1ull << (4 * width)) - 1;
}

constexpr char kHexDigits[] = "0123456789abcdef";

}  // namespace

void DatasetSpec::validate() const {
  if (rows == 0) throw ParamError("dataset rows must be > 0");
  if (dense_features > 0xFFFF || sparse_features > 0xFFFF) {
    throw ParamError("at most 65535 dense and 65535 sparse features");
  }
  if (!(negative_fraction >= 0.0 && negative_fraction <= 1.0) ||
      !(nan_fraction >= 0.0 && nan_fraction <= 1.0)) {
    throw ParamError("fractions must lie in [0, 1]");
  }
  if (negative_fraction + nan_fraction > 1.0) {
    throw ParamError("negative_fraction + nan_fraction must be <= 1");
  }
  if (token_width < 1 || token_width > kMaxTokenWidth) {
    throw ParamError("token width must be in [1, 16]");
  }
  if (sparse_cardinality == 0) throw ParamError("sparse_cardinality must be >= 1");
  if (token_width < 16 && sparse_cardinality - 1 > token_space(token_width)) {
    throw ParamError("sparse_cardinality exceeds the number of distinct " +
                     std::to_string(token_width) + "-character tokens");
  }
}

ColumnFileHeader DatasetSpec::header() const {
  ColumnFileHeader h;
  h.dense_count = static_cast<std::uint16_t>(dense_features);
  h.sparse_count = static_cast<std::uint16_t>(sparse_features);
  h.sparse_token_width = static_cast<std::uint8_t>(token_width);
  h.row_count = rows;
  return h;
}

DatasetSpec DatasetSpec::d1(std::uint64_t rows, std::uint64_t seed) {
  DatasetSpec s;
  s.rows = rows;
  s.seed = seed;
  s.dense_features = 13;
  s.sparse_features = 26;
  return s;
}

DatasetSpec DatasetSpec::d2(std::uint64_t rows, std::uint64_t seed) {
  DatasetSpec s;
  s.rows = rows;
  s.seed = seed;
  s.dense_features = 504;
  s.sparse_features = 42;
  return s;
}

SyntheticColumnGenerator::SyntheticColumnGenerator(const DatasetSpec& spec, std::size_t column)
    : spec_(spec), column_(column) {
  spec_.validate();
  reset();
}

void SyntheticColumnGenerator::reset() {
  state_ = splitmix64(spec_.seed ^ splitmix64(0x6d70636f6cull + column_));
  // Odd multiplier: k -> k * m + b is a bijection modulo 2^(4W), so distinct
  // token indices give distinct tokens.
  token_multiplier_ = splitmix64(state_ ^ 0xa5a5a5a5ull) | 1ull;
  token_offset_ = splitmix64(state_ ^ 0x5a5a5a5aull);
}

// splitmix64 stream; fully specified so output does not depend on the standard library.
std::uint64_t SyntheticColumnGenerator::next_u64() {
  state_ += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double SyntheticColumnGenerator::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

void SyntheticColumnGenerator::generate(std::uint64_t count, std::vector<std::byte>& out) {
  const std::size_t old = out.size();
  if (column_ < spec_.dense_features) {
    out.resize(old + count * sizeof(float));
    std::byte* dst = out.data() + old;
    const double neg_cut = spec_.nan_fraction + spec_.negative_fraction;
    for (std::uint64_t i = 0; i < count; ++i) {
      const double u = next_unit();
      float v;
      if (u < spec_.nan_fraction) {
        v = std::numeric_limits<float>::quiet_NaN();
      } else {
        // Exponential(mean) magnitude by inversion.
        const double magnitude = -kDenseMean * std::log1p(-next_unit());
        v = static_cast<float>(u < neg_cut ? -magnitude : magnitude);
      }
      std::memcpy(dst + i * sizeof(float), &v, sizeof(float));
    }
    return;
  }
  const unsigned width = spec_.token_width;
  const std::uint64_t mask = token_space(width);
  out.resize(old + count * width);
  char* dst = reinterpret_cast<char*>(out.data() + old);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto k = static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * spec_.sparse_cardinality) >> 64);
    std::uint64_t token = (k * token_multiplier_ + token_offset_) & mask;
    for (unsigned j = width; j-- > 0;) {
      dst[i * width + j] = kHexDigits[token & 0xF];
      token >>= 4;
    }
  }
}

ColumnBatch generate_synthetic(const DatasetSpec& spec) {
  spec.validate();
  ColumnBatch batch = make_empty_batch(spec.header());
  const std::size_t columns = spec.dense_features + spec.sparse_features;
  // Columns are independent streams, so generation parallelises across them.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < columns; ++c) {
    SyntheticColumnGenerator gen(spec, c);
    std::vector<std::byte> bytes;
    gen.generate(spec.rows, bytes);
    append_column_elements(batch, c, bytes);
  }
  return batch;
}

}  // namespace minipipe
