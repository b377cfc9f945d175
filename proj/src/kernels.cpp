#include "minipipe/kernels.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>

namespace minipipe::kernels {

namespace {

constexpr std::uint8_t kBad = 0xFF;

constexpr std::array<std::uint8_t, 256> make_hex_table() {
  std::array<std::uint8_t, 256> t{};
  for (auto& v : t) v = kBad;
  for (int c = '0'; c <= '9'; ++c) t[c] = static_cast<std::uint8_t>(c - '0');
  for (int c = 'a'; c <= 'f'; ++c) t[c] = static_cast<std::uint8_t>(c - 'a' + 10);
  for (int c = 'A'; c <= 'F'; ++c) t[c] = static_cast<std::uint8_t>(c - 'A' + 10);
  return t;
}

constexpr auto kHexTable = make_hex_table();
constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::max();

// Index of the first negative or NaN value, or kNone.
std::int64_t first_log_domain_violation(std::span<const float> values, int threads) {
  std::int64_t bad = kNone;
  const auto n = static_cast<std::int64_t>(values.size());
#pragma omp parallel for reduction(min : bad) if (threads > 1) num_threads(threads)
  for (std::int64_t i = 0; i < n; ++i) {
    if (!(values[i] >= 0.0f)) bad = std::min(bad, i);
  }
  return bad;
}

[[noreturn]] void throw_log_domain(float x, std::uint64_t row) {
  throw DomainError("logarithm undefined for " + std::to_string(x) + " at row " +
                        std::to_string(row),
                    row);
}

}  // namespace

void dense_chain(std::span<const OperatorKind> chain, std::span<float> values,
                 std::uint64_t first_row, int threads) {
  const auto n = static_cast<std::int64_t>(values.size());
  float* v = values.data();
  // Fused fast path for the standard chain: neg2zero makes logarithm total.
  if (chain.size() == 2 && chain[0] == OperatorKind::kNeg2Zero &&
      chain[1] == OperatorKind::kLogarithm) {
#pragma omp parallel for if (threads > 1) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) v[i] = logarithm_unchecked(neg2zero(v[i]));
    return;
  }
  for (const auto op : chain) {
    switch (op) {
      case OperatorKind::kNeg2Zero:
#pragma omp parallel for if (threads > 1) num_threads(threads)
        for (std::int64_t i = 0; i < n; ++i) v[i] = neg2zero(v[i]);
        break;
      case OperatorKind::kLogarithm: {
        const auto bad = first_log_domain_violation(values, threads);
        if (bad != kNone) throw_log_domain(v[bad], first_row + static_cast<std::uint64_t>(bad));
#pragma omp parallel for if (threads > 1) num_threads(threads)
        for (std::int64_t i = 0; i < n; ++i) v[i] = logarithm_unchecked(v[i]);
        break;
      }
      default:
        throw SpecError("operator " + std::string(to_string(op)) + " is not a dense operator");
    }
  }
}

void parse_hex(std::span<const char> tokens, unsigned width, std::span<std::uint64_t> out,
               std::uint64_t first_row, int threads) {
  const auto n = static_cast<std::int64_t>(out.size());
  const auto* src = reinterpret_cast<const unsigned char*>(tokens.data());
  std::int64_t bad = kNone;
#pragma omp parallel for reduction(min : bad) if (threads > 1) num_threads(threads)
  for (std::int64_t i = 0; i < n; ++i) {
    const unsigned char* t = src + i * width;
    std::uint64_t acc = 0;
    std::uint8_t any_bad = 0;
    for (unsigned j = 0; j < width; ++j) {
      const std::uint8_t d = kHexTable[t[j]];
      any_bad |= static_cast<std::uint8_t>(d == kBad);
      acc = (acc << 4) | (d & 0xF);
    }
    out[i] = acc;
    if (any_bad) bad = std::min(bad, i);
  }
  if (bad != kNone) {
    const unsigned char* t = src + bad * width;
    std::size_t pos = 0;
    while (pos < width && kHexTable[t[pos]] != kBad) ++pos;
    const auto row = first_row + static_cast<std::uint64_t>(bad);
    throw ParseError("non-hex character at row " + std::to_string(row) + " position " +
                         std::to_string(pos),
                     row, pos);
  }
}

void modulus(std::span<std::uint64_t> values, std::uint64_t m, int threads) {
  if (m == 0) throw ParamError("modulus must be >= 1");
  const auto n = static_cast<std::int64_t>(values.size());
  std::uint64_t* v = values.data();
  if ((m & (m - 1)) == 0) {
    const std::uint64_t mask = m - 1;
#pragma omp parallel for if (threads > 1) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) v[i] &= mask;
    return;
  }
#pragma omp parallel for if (threads > 1) num_threads(threads)
  for (std::int64_t i = 0; i < n; ++i) v[i] %= m;
}

void vocab_gen(VocabTable& table, std::span<const std::uint64_t> values,
               std::uint64_t first_row) {
  for (std::size_t i = 0; i < values.size(); ++i) table.insert(values[i], first_row + i);
}

void vocab_map(const VocabTable& table, std::span<const std::uint64_t> values,
               std::span<std::uint32_t> out, std::uint64_t first_row, VocabMapOptions options,
               int threads) {
  const auto n = static_cast<std::int64_t>(values.size());
  const auto oov = static_cast<std::uint32_t>(table.size());
  std::int64_t bad = kNone;
#pragma omp parallel for reduction(min : bad) if (threads > 1) num_threads(threads)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = table.find(values[i]);
    if (idx) {
      out[i] = *idx;
    } else {
      out[i] = oov;
      if (!options.out_of_vocabulary_bucket) bad = std::min(bad, i);
    }
  }
  if (bad != kNone) {
    const auto row = first_row + static_cast<std::uint64_t>(bad);
    throw UnknownValueError("value " + std::to_string(values[bad]) + " at row " +
                                std::to_string(row) + " is not in the vocabulary",
                            values[bad], row);
  }
}

}  // namespace minipipe::kernels
