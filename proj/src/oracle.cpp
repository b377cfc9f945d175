#include "minipipe/oracle.hpp"

#include <charconv>
#include <cmath>
#include <unordered_map>

#include "minipipe/error.hpp"

namespace minipipe {

namespace {

std::string at(std::uint64_t row, std::size_t column) {
  return " at row " + std::to_string(row) + " (column " + std::to_string(column) + ")";
}

float oracle_dense(float x, const std::vector<OperatorKind>& chain, std::uint64_t row,
                   std::size_t column) {
  for (OperatorKind op : chain) {
    if (op == OperatorKind::kNeg2Zero) {
      if (std::isnan(x) || x < 0.0f) x = 0.0f;
    } else if (op == OperatorKind::kLogarithm) {
      if (std::isnan(x) || x < 0.0f) {
        throw DomainError("logarithm of negative or NaN input" + at(row, column), row, column);
      }
      const double wide = static_cast<double>(x) + 1.0;
      x = static_cast<float>(std::log(wide));
    }
  }
  return x;
}

std::uint64_t oracle_hex(std::string_view token, std::uint64_t row, std::size_t column) {
  for (std::size_t i = 0; i < token.size(); ++i) {
    const char c = token[i];
    const bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
    if (!ok) {
      throw ParseError("non-hex character at position " + std::to_string(i) + at(row, column),
                       row, i, column);
    }
  }
  std::uint64_t v = 0;
  std::from_chars(token.data(), token.data() + token.size(), v, 16);
  return v;
}

}  // namespace

OracleResult oracle_run(const ColumnBatch& batch, const PipelineSpec& spec) {
  spec.validate();
  batch.validate();
  if (batch.sparse_kind != SparseKind::kHexToken) {
    throw SpecError("oracle input must carry raw hex tokens");
  }
  const std::uint64_t rows = batch.row_count;
  const std::size_t dense_count = batch.dense.size();
  OracleResult out;

  for (std::size_t c = 0; c < dense_count; ++c) {
    DenseColumn col{batch.dense[c].name, {}};
    for (std::uint64_t r = 0; r < rows; ++r) {
      col.values.push_back(oracle_dense(batch.dense[c].values[r], spec.dense_chain, r, c));
    }
    out.dense_out.push_back(std::move(col));
  }

  const auto& chain = spec.sparse_chain;
  auto has = [&](OperatorKind op) {
    for (OperatorKind o : chain) {
      if (o == op) return true;
    }
    return false;
  };
  out.sparse_kind = has(OperatorKind::kVocabMap)  ? SparseKind::kIndex32
                    : has(OperatorKind::kHex2Int) ? SparseKind::kValue64
                                                  : SparseKind::kHexToken;
  const unsigned w = batch.token_width;
  const std::uint64_t m = spec.params.modulus;

  for (std::size_t s = 0; s < batch.sparse.size(); ++s) {
    const std::size_t c = dense_count + s;
    const SparseColumn& in = batch.sparse[s];
    if (chain.empty()) {
      out.sparse_tokens.push_back(in);
      continue;
    }

    std::vector<std::uint64_t> values;
    for (std::uint64_t r = 0; r < rows; ++r) {
      std::uint64_t v = oracle_hex(in.token(r, w), r, c);
      if (has(OperatorKind::kModulus)) v = v % m;
      values.push_back(v);
    }

    if (!has(OperatorKind::kVocabGen)) {
      out.sparse_values.push_back({in.name, std::move(values)});
      continue;
    }

    // First scan: every new value gets the next index.
    std::unordered_map<std::uint64_t, std::uint32_t> index;
    OracleTable table{m, {}};
    for (std::uint64_t r = 0; r < rows; ++r) {
      const std::uint64_t v = values[r];
      if (v >= m) {
        throw RangeError("value " + std::to_string(v) + " outside modulus range" + at(r, c), r, c);
      }
      if (index.find(v) == index.end()) {
        index[v] = static_cast<std::uint32_t>(table.keys.size());
        table.keys.push_back(v);
      }
    }

    // Second scan: look every value up.
    IndexColumn mapped{in.name, {}};
    for (std::uint64_t r = 0; r < rows; ++r) {
      auto it = index.find(values[r]);
      if (it == index.end()) {
        throw UnknownValueError("value " + std::to_string(values[r]) + " not in table" + at(r, c),
                                values[r], r, c);
      }
      mapped.indices.push_back(it->second);
    }
    out.sparse_indices.push_back(std::move(mapped));
    out.tables.push_back(std::move(table));
  }
  return out;
}

ColumnBatch OracleResult::to_batch(std::uint64_t row_count, std::uint8_t token_width) const {
  ColumnBatch b;
  b.row_count = row_count;
  b.token_width = token_width;
  b.dense = dense_out;
  b.sparse_kind = sparse_kind;
  b.sparse = sparse_tokens;
  b.values = sparse_values;
  b.indices = sparse_indices;
  return b;
}

}  // namespace minipipe
