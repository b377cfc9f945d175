#pragma once
// Columnar data model and the on-disk column file format.
//
// File layout (all integers little-endian):
//
//   offset  size  field
//   0       8     magic "MPCOL\0\0\1"
//   8       2     version (1)
//   10      2     dense_count
//   12      2     sparse_count
//   14      1     sparse_token_width W
//   15      1     sparse element kind (0 = hex token, 1 = u32 index, 2 = u64 value)
//   16      8     row_count
//   24      ...   dense columns, each row_count float32 values
//                 sparse columns, each row_count elements of the kind's width
//
// Column names are not stored. Readers assign "dense_<i>" / "sparse_<i>".

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace minipipe {

static_assert(std::endian::native == std::endian::little,
              "column files and frames are encoded with native little-endian copies");

enum class SparseKind : std::uint8_t {
  kHexToken = 0,
  kIndex32 = 1,
  kValue64 = 2,
};

std::string_view to_string(SparseKind kind);

inline constexpr std::array<char, 8> kColumnMagic = {'M', 'P', 'C', 'O', 'L', '\0', '\0', '\1'};
inline constexpr std::uint16_t kColumnFileVersion = 1;
inline constexpr std::size_t kColumnHeaderSize = 24;
inline constexpr unsigned kDefaultTokenWidth = 8;
inline constexpr unsigned kMaxTokenWidth = 16;

struct ColumnFileHeader {
  std::uint16_t version = kColumnFileVersion;
  std::uint16_t dense_count = 0;
  std::uint16_t sparse_count = 0;
  std::uint8_t sparse_token_width = kDefaultTokenWidth;
  SparseKind sparse_kind = SparseKind::kHexToken;
  std::uint64_t row_count = 0;

  std::size_t column_count() const { return std::size_t{dense_count} + sparse_count; }
  bool is_dense(std::size_t column) const { return column < dense_count; }
  /// Bytes per element of the given column.
  std::size_t element_width(std::size_t column) const;
  std::size_t sparse_element_width() const;
  std::uint64_t payload_bytes() const;
  std::uint64_t file_bytes() const { return kColumnHeaderSize + payload_bytes(); }

  /// Throws FormatError on an out-of-range token width or unknown kind.
  void validate() const;

  std::array<std::byte, kColumnHeaderSize> encode() const;
  static ColumnFileHeader decode(std::span<const std::byte> bytes);

  bool operator==(const ColumnFileHeader&) const = default;
};

struct DenseColumn {
  std::string name;
  std::vector<float> values;
};

/// Fixed-width hexadecimal tokens stored back to back.
struct SparseColumn {
  std::string name;
  std::vector<char> tokens;

  std::string_view token(std::size_t row, unsigned width) const {
    return {tokens.data() + row * width, width};
  }
};

struct IndexColumn {
  std::string name;
  std::vector<std::uint32_t> indices;
};

struct ValueColumn {
  std::string name;
  std::vector<std::uint64_t> values;
};

/// A set of equally long columns. Only the sparse vector matching
/// `sparse_kind` may be non-empty.
struct ColumnBatch {
  std::uint64_t row_count = 0;
  std::uint8_t token_width = kDefaultTokenWidth;
  SparseKind sparse_kind = SparseKind::kHexToken;
  std::vector<DenseColumn> dense;
  std::vector<SparseColumn> sparse;
  std::vector<IndexColumn> indices;
  std::vector<ValueColumn> values;

  std::size_t sparse_count() const;
  ColumnFileHeader header() const;

  /// Checks shared row count, unique names, token alphabet, and kind consistency.
  /// Throws FormatError.
  void validate() const;
  /// validate() minus the token alphabet, which Hex2Int checks per row.
  void validate_layout() const;

  /// Bit-exact comparison of schema and column data; names are ignored
  /// because the file format does not carry them.
  friend bool operator==(const ColumnBatch& a, const ColumnBatch& b);
};

std::string dense_column_name(std::size_t i);
std::string sparse_column_name(std::size_t i);

/// An empty batch shaped after `header`, with canonical names and reserved storage.
ColumnBatch make_empty_batch(const ColumnFileHeader& header);

// ---------------------------------------------------------------------------
// Streaming writer / reader

class ColumnFileWriter {
 public:
  /// Writes the header immediately.
  ColumnFileWriter(std::ostream& out, const ColumnFileHeader& header);

  /// Appends raw element bytes to the current column. Columns must be
  /// completed in order; a chunk may not overrun the current column.
  void append(std::size_t column, std::span<const std::byte> bytes);
  /// Verifies every column is complete and flushes.
  void finish();

  std::uint64_t bytes_written() const { return bytes_written_; }
  const ColumnFileHeader& header() const { return header_; }

 private:
  void put(std::span<const std::byte> bytes);

  std::ostream& out_;
  ColumnFileHeader header_;
  std::size_t column_ = 0;
  std::uint64_t column_bytes_ = 0;
  std::uint64_t bytes_written_ = 0;
};

struct ColumnChunk {
  std::size_t column = 0;
  std::uint64_t first_row = 0;
  std::vector<std::byte> bytes;
  bool last_in_column = false;
};

class ColumnFileReader {
 public:
  /// Reads and validates the header. Throws FormatError on a bad magic.
  explicit ColumnFileReader(std::istream& in);

  const ColumnFileHeader& header() const { return header_; }

  /// Reads up to `max_elements` of the current column. Returns nullopt after
  /// the last column. Throws LengthError naming the column on truncation.
  std::optional<ColumnChunk> next(std::size_t max_elements);

  /// Column the next chunk will come from, or nullopt at the end.
  std::optional<std::size_t> peek_column();

  /// Seeks back to the first column. Requires a seekable stream.
  void rewind();

 private:
  std::istream& in_;
  ColumnFileHeader header_;
  std::size_t column_ = 0;
  std::uint64_t row_ = 0;
};

/// Returns bytes written. Throws IoError carrying bytes written so far.
std::uint64_t write_column_file(const ColumnBatch& batch, std::ostream& out);
ColumnBatch read_column_file(std::istream& in);

void write_column_file(const ColumnBatch& batch, const std::string& path);
ColumnBatch read_column_file(const std::string& path);

/// Appends the little-endian bytes of one column of `batch`, rows [first, first+count).
void append_column_bytes(const ColumnBatch& batch, std::size_t column,
                         std::uint64_t first, std::uint64_t count,
                         std::vector<std::byte>& out);

/// Decodes element bytes into column `column` of `batch`, appending.
void append_column_elements(ColumnBatch& batch, std::size_t column,
                            std::span<const std::byte> bytes);

// ---------------------------------------------------------------------------
// Synthetic data

struct DatasetSpec {
  std::uint64_t rows = 1000;
  std::size_t dense_features = 13;
  std::size_t sparse_features = 26;
  std::uint64_t seed = 0;
  double negative_fraction = 0.1;
  double nan_fraction = 0.02;
  std::uint64_t sparse_cardinality = 1'000'000;
  unsigned token_width = kDefaultTokenWidth;

  /// Throws ParamError.
  void validate() const;
  ColumnFileHeader header() const;

  /// 13 dense + 26 sparse columns.
  static DatasetSpec d1(std::uint64_t rows, std::uint64_t seed);
  /// 504 dense + 42 sparse columns.
  static DatasetSpec d2(std::uint64_t rows, std::uint64_t seed);
};

/// Mean of the exponential magnitude used for dense values.
inline constexpr double kDenseMean = 100.0;

/// Deterministic per-column generator. Column `c` of a dataset depends only on
/// (spec, c), so columns can be produced independently and in pieces.
class SyntheticColumnGenerator {
 public:
  SyntheticColumnGenerator(const DatasetSpec& spec, std::size_t column);

  /// Produces the next `count` elements of the column as little-endian bytes.
  void generate(std::uint64_t count, std::vector<std::byte>& out);
  void reset();

 private:
  std::uint64_t next_u64();
  double next_unit();

  DatasetSpec spec_;
  std::size_t column_;
  std::uint64_t state_ = 0;
  std::uint64_t token_multiplier_ = 1;
  std::uint64_t token_offset_ = 0;
};

ColumnBatch generate_synthetic(const DatasetSpec& spec);

}  // namespace minipipe
