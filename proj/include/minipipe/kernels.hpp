#pragma once
// Block kernels used by the slot executor. Each kernel runs an OpenMP
// parallel loop over elements when `threads > 1`; with one thread it is a
// plain loop. The serial reference for all of them lives in oracle.hpp.

#include <cstdint>
#include <span>

#include "minipipe/ops.hpp"
#include "minipipe/pipeline_spec.hpp"

namespace minipipe::kernels {

/// Applies the dense chain in place. `first_row` is the row of values[0],
/// used for error attribution.
void dense_chain(std::span<const OperatorKind> chain, std::span<float> values,
                 std::uint64_t first_row, int threads = 1);

/// hex2int over back-to-back tokens of `width` characters.
void parse_hex(std::span<const char> tokens, unsigned width, std::span<std::uint64_t> out,
               std::uint64_t first_row, int threads = 1);

void modulus(std::span<std::uint64_t> values, std::uint64_t m, int threads = 1);

/// vocab_gen is order-dependent and always sequential.
void vocab_gen(VocabTable& table, std::span<const std::uint64_t> values,
               std::uint64_t first_row);

void vocab_map(const VocabTable& table, std::span<const std::uint64_t> values,
               std::span<std::uint32_t> out, std::uint64_t first_row,
               VocabMapOptions options = {}, int threads = 1);

}  // namespace minipipe::kernels
