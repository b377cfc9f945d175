#pragma once
// Naive single-threaded reference for every pipeline. One loop per column,
// no streaming, and no code shared with the kernels: differential tests
// against it exercise the operators, not just the plumbing.

#include <cstdint>
#include <vector>

#include "minipipe/colfmt.hpp"
#include "minipipe/pipeline_spec.hpp"

namespace minipipe {

/// First-occurrence key list of one sparse column: keys[i] maps to index i.
struct OracleTable {
  std::uint64_t modulus_range = 0;
  std::vector<std::uint64_t> keys;
};

struct OracleResult {
  SparseKind sparse_kind = SparseKind::kHexToken;
  std::vector<DenseColumn> dense_out;
  /// Only the vector matching sparse_kind is populated.
  std::vector<SparseColumn> sparse_tokens;
  std::vector<ValueColumn> sparse_values;
  std::vector<IndexColumn> sparse_indices;
  std::vector<OracleTable> tables;

  /// The same data as a batch, comparable with engine output.
  ColumnBatch to_batch(std::uint64_t row_count, std::uint8_t token_width) const;
};

/// Throws the operator errors of the ops module, attributed to row and column.
OracleResult oracle_run(const ColumnBatch& batch, const PipelineSpec& spec);

}  // namespace minipipe
