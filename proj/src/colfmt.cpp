#include "minipipe/colfmt.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "minipipe/error.hpp"

namespace minipipe {

namespace {

template <typename T>
void put_le(std::byte* dst, T v) {
  std::memcpy(dst, &v, sizeof(T));
}

template <typename T>
T get_le(const std::byte* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

bool is_hex(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

template <typename T>
void append_span(std::vector<std::byte>& out, const T* data, std::uint64_t count) {
  const auto* p = reinterpret_cast<const std::byte*>(data);
  out.insert(out.end(), p, p + count * sizeof(T));
}

template <typename T>
void append_elements(std::vector<T>& dst, std::span<const std::byte> bytes) {
  const std::size_t n = bytes.size() / sizeof(T);
  const std::size_t old = dst.size();
  dst.resize(old + n);
  std::memcpy(dst.data() + old, bytes.data(), n * sizeof(T));
}

}  // namespace

std::string_view to_string(SparseKind kind) {
  switch (kind) {
    case SparseKind::kHexToken: return "hex";
    case SparseKind::kIndex32: return "index32";
    case SparseKind::kValue64: return "value64";
  }
  return "unknown";
}

std::size_t ColumnFileHeader::sparse_element_width() const {
  switch (sparse_kind) {
    case SparseKind::kHexToken: return sparse_token_width;
    case SparseKind::kIndex32: return 4;
    case SparseKind::kValue64: return 8;
  }
  return 0;
}

std::size_t ColumnFileHeader::element_width(std::size_t column) const {
  return is_dense(column) ? sizeof(float) : sparse_element_width();
}

std::uint64_t ColumnFileHeader::payload_bytes() const {
  return row_count * (4ull * dense_count + std::uint64_t{sparse_element_width()} * sparse_count);
}

void ColumnFileHeader::validate() const {
  if (version != kColumnFileVersion) {
    throw FormatError("unsupported column file version " + std::to_string(version));
  }
  if (sparse_token_width < 1 || sparse_token_width > kMaxTokenWidth) {
    throw FormatError("sparse token width must be in [1, 16], got " +
                      std::to_string(sparse_token_width));
  }
  if (static_cast<std::uint8_t>(sparse_kind) > 2) {
    throw FormatError("unknown sparse element kind " +
                      std::to_string(static_cast<int>(sparse_kind)));
  }
}

std::array<std::byte, kColumnHeaderSize> ColumnFileHeader::encode() const {
  std::array<std::byte, kColumnHeaderSize> out{};
  std::memcpy(out.data(), kColumnMagic.data(), kColumnMagic.size());
  put_le<std::uint16_t>(out.data() + 8, version);
  put_le<std::uint16_t>(out.data() + 10, dense_count);
  put_le<std::uint16_t>(out.data() + 12, sparse_count);
  out[14] = std::byte{sparse_token_width};
  out[15] = std::byte{static_cast<std::uint8_t>(sparse_kind)};
  put_le<std::uint64_t>(out.data() + 16, row_count);
  return out;
}

ColumnFileHeader ColumnFileHeader::decode(std::span<const std::byte> bytes) {
  if (bytes.size() < kColumnMagic.size() ||
      std::memcmp(bytes.data(), kColumnMagic.data(), kColumnMagic.size()) != 0) {
    throw FormatError("bad column file magic");
  }
  if (bytes.size() < kColumnHeaderSize) {
    throw FormatError("column file header truncated: " + std::to_string(bytes.size()) +
                      " of 24 bytes");
  }
  ColumnFileHeader h;
  h.version = get_le<std::uint16_t>(bytes.data() + 8);
  h.dense_count = get_le<std::uint16_t>(bytes.data() + 10);
  h.sparse_count = get_le<std::uint16_t>(bytes.data() + 12);
  h.sparse_token_width = std::to_integer<std::uint8_t>(bytes[14]);
  h.sparse_kind = static_cast<SparseKind>(std::to_integer<std::uint8_t>(bytes[15]));
  h.row_count = get_le<std::uint64_t>(bytes.data() + 16);
  h.validate();
  return h;
}

// ---------------------------------------------------------------------------

std::size_t ColumnBatch::sparse_count() const {
  switch (sparse_kind) {
    case SparseKind::kHexToken: return sparse.size();
    case SparseKind::kIndex32: return indices.size();
    case SparseKind::kValue64: return values.size();
  }
  return 0;
}

ColumnFileHeader ColumnBatch::header() const {
  ColumnFileHeader h;
  h.dense_count = static_cast<std::uint16_t>(dense.size());
  h.sparse_count = static_cast<std::uint16_t>(sparse_count());
  h.sparse_token_width = token_width;
  h.sparse_kind = sparse_kind;
  h.row_count = row_count;
  return h;
}

void ColumnBatch::validate() const {
  validate_layout();
  for (const auto& c : sparse) {
    for (std::size_t i = 0; i < c.tokens.size(); ++i) {
      if (!is_hex(c.tokens[i])) {
        throw FormatError("sparse column '" + c.name + "' row " +
                          std::to_string(i / token_width) + " has a non-hex character");
      }
    }
  }
}

void ColumnBatch::validate_layout() const {
  header().validate();
  if (dense.size() > 0xFFFF || sparse_count() > 0xFFFF) {
    throw FormatError("too many columns for the file format");
  }
  const std::size_t foreign =
      (sparse_kind == SparseKind::kHexToken ? 0 : sparse.size()) +
      (sparse_kind == SparseKind::kIndex32 ? 0 : indices.size()) +
      (sparse_kind == SparseKind::kValue64 ? 0 : values.size());
  if (foreign != 0) {
    throw FormatError("batch holds sparse columns of a kind other than " +
                      std::string(to_string(sparse_kind)));
  }
  std::set<std::string_view> names;
  auto check_name = [&](const std::string& name) {
    if (!names.insert(name).second) throw FormatError("duplicate column name '" + name + "'");
  };
  auto check_rows = [&](std::size_t n, const std::string& name) {
    if (n != row_count) {
      throw FormatError("column '" + name + "' has " + std::to_string(n) + " rows, batch has " +
                        std::to_string(row_count));
    }
  };
  for (const auto& c : dense) {
    check_name(c.name);
    check_rows(c.values.size(), c.name);
  }
  for (const auto& c : sparse) {
    check_name(c.name);
    if (c.tokens.size() != row_count * token_width) {
      throw FormatError("sparse column '" + c.name + "' byte length " +
                        std::to_string(c.tokens.size()) + " != rows * width");
    }
  }
  for (const auto& c : indices) {
    check_name(c.name);
    check_rows(c.indices.size(), c.name);
  }
  for (const auto& c : values) {
    check_name(c.name);
    check_rows(c.values.size(), c.name);
  }
}

bool operator==(const ColumnBatch& a, const ColumnBatch& b) {
  if (a.header() != b.header()) return false;
  for (std::size_t i = 0; i < a.dense.size(); ++i) {
    const auto& x = a.dense[i].values;
    const auto& y = b.dense[i].values;
    if (x.size() != y.size() ||
        (!x.empty() && std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) != 0)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.sparse.size(); ++i) {
    if (a.sparse[i].tokens != b.sparse[i].tokens) return false;
  }
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    if (a.indices[i].indices != b.indices[i].indices) return false;
  }
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i].values != b.values[i].values) return false;
  }
  return true;
}

std::string dense_column_name(std::size_t i) { return "dense_" + std::to_string(i); }
std::string sparse_column_name(std::size_t i) { return "sparse_" + std::to_string(i); }

ColumnBatch make_empty_batch(const ColumnFileHeader& header) {
  ColumnBatch b;
  b.row_count = header.row_count;
  b.token_width = header.sparse_token_width;
  b.sparse_kind = header.sparse_kind;
  b.dense.resize(header.dense_count);
  for (std::size_t i = 0; i < b.dense.size(); ++i) {
    b.dense[i].name = dense_column_name(i);
    b.dense[i].values.reserve(header.row_count);
  }
  switch (header.sparse_kind) {
    case SparseKind::kHexToken:
      b.sparse.resize(header.sparse_count);
      for (std::size_t i = 0; i < b.sparse.size(); ++i) {
        b.sparse[i].name = sparse_column_name(i);
        b.sparse[i].tokens.reserve(header.row_count * header.sparse_token_width);
      }
      break;
    case SparseKind::kIndex32:
      b.indices.resize(header.sparse_count);
      for (std::size_t i = 0; i < b.indices.size(); ++i) {
        b.indices[i].name = sparse_column_name(i);
        b.indices[i].indices.reserve(header.row_count);
      }
      break;
    case SparseKind::kValue64:
      b.values.resize(header.sparse_count);
      for (std::size_t i = 0; i < b.values.size(); ++i) {
        b.values[i].name = sparse_column_name(i);
        b.values[i].values.reserve(header.row_count);
      }
      break;
  }
  return b;
}

void append_column_bytes(const ColumnBatch& batch, std::size_t column, std::uint64_t first,
                         std::uint64_t count, std::vector<std::byte>& out) {
  if (column < batch.dense.size()) {
    append_span(out, batch.dense[column].values.data() + first, count);
    return;
  }
  const std::size_t s = column - batch.dense.size();
  switch (batch.sparse_kind) {
    case SparseKind::kHexToken:
      append_span(out, batch.sparse[s].tokens.data() + first * batch.token_width,
                  count * batch.token_width);
      break;
    case SparseKind::kIndex32:
      append_span(out, batch.indices[s].indices.data() + first, count);
      break;
    case SparseKind::kValue64:
      append_span(out, batch.values[s].values.data() + first, count);
      break;
  }
}

void append_column_elements(ColumnBatch& batch, std::size_t column,
                            std::span<const std::byte> bytes) {
  if (column < batch.dense.size()) {
    append_elements(batch.dense[column].values, bytes);
    return;
  }
  const std::size_t s = column - batch.dense.size();
  switch (batch.sparse_kind) {
    case SparseKind::kHexToken: append_elements(batch.sparse.at(s).tokens, bytes); break;
    case SparseKind::kIndex32: append_elements(batch.indices.at(s).indices, bytes); break;
    case SparseKind::kValue64: append_elements(batch.values.at(s).values, bytes); break;
  }
}

// ---------------------------------------------------------------------------

ColumnFileWriter::ColumnFileWriter(std::ostream& out, const ColumnFileHeader& header)
    : out_(out), header_(header) {
  header_.validate();
  const auto bytes = header_.encode();
  put(bytes);
}

void ColumnFileWriter::put(std::span<const std::byte> bytes) {
  out_.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!out_) {
    throw IoError("column file write failed after " + std::to_string(bytes_written_) + " bytes",
                  bytes_written_);
  }
  bytes_written_ += bytes.size();
}

void ColumnFileWriter::append(std::size_t column, std::span<const std::byte> bytes) {
  while (column_ < column && column_ < header_.column_count() &&
         column_bytes_ == header_.row_count * header_.element_width(column_)) {
    ++column_;
    column_bytes_ = 0;
  }
  if (column != column_ || column >= header_.column_count()) {
    throw FormatError("column " + std::to_string(column) + " written out of order (expected " +
                      std::to_string(column_) + ")");
  }
  const std::uint64_t limit = header_.row_count * header_.element_width(column_);
  if (column_bytes_ + bytes.size() > limit) {
    throw LengthError("column " + std::to_string(column) + " overruns its row count", column);
  }
  put(bytes);
  column_bytes_ += bytes.size();
}

void ColumnFileWriter::finish() {
  // Skip over trailing complete (or zero-row) columns.
  while (column_ < header_.column_count() &&
         column_bytes_ == header_.row_count * header_.element_width(column_)) {
    ++column_;
    column_bytes_ = 0;
  }
  if (column_ != header_.column_count()) {
    throw LengthError("column " + std::to_string(column_) + " incomplete at finish", column_);
  }
  out_.flush();
  if (!out_) throw IoError("column file flush failed", bytes_written_);
}

ColumnFileReader::ColumnFileReader(std::istream& in) : in_(in) {
  std::array<std::byte, kColumnHeaderSize> raw{};
  in_.read(reinterpret_cast<char*>(raw.data()), raw.size());
  const auto got = static_cast<std::size_t>(in_.gcount());
  header_ = ColumnFileHeader::decode(std::span(raw.data(), got));
}

std::optional<std::size_t> ColumnFileReader::peek_column() {
  while (column_ < header_.column_count() && row_ == header_.row_count) {
    ++column_;
    row_ = 0;
  }
  if (column_ >= header_.column_count()) return std::nullopt;
  return column_;
}

std::optional<ColumnChunk> ColumnFileReader::next(std::size_t max_elements) {
  if (!peek_column()) return std::nullopt;
  const std::uint64_t n = std::min<std::uint64_t>(max_elements, header_.row_count - row_);
  const std::size_t width = header_.element_width(column_);
  ColumnChunk chunk;
  chunk.column = column_;
  chunk.first_row = row_;
  chunk.bytes.resize(n * width);
  in_.read(reinterpret_cast<char*>(chunk.bytes.data()),
           static_cast<std::streamsize>(chunk.bytes.size()));
  if (static_cast<std::size_t>(in_.gcount()) != chunk.bytes.size()) {
    const std::uint64_t have = row_ + static_cast<std::uint64_t>(in_.gcount()) / width;
    throw LengthError("column " + std::to_string(column_) + " truncated: " +
                          std::to_string(have) + " of " + std::to_string(header_.row_count) +
                          " rows present",
                      column_);
  }
  row_ += n;
  chunk.last_in_column = row_ == header_.row_count;
  return chunk;
}

void ColumnFileReader::rewind() {
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kColumnHeaderSize), std::ios::beg);
  if (!in_) throw CapabilityError("column stream is not seekable");
  column_ = 0;
  row_ = 0;
}

std::uint64_t write_column_file(const ColumnBatch& batch, std::ostream& out) {
  batch.validate();
  ColumnFileWriter writer(out, batch.header());
  constexpr std::uint64_t kRowsPerWrite = 1 << 16;
  std::vector<std::byte> buf;
  for (std::size_t c = 0; c < batch.header().column_count(); ++c) {
    for (std::uint64_t r = 0; r < batch.row_count; r += kRowsPerWrite) {
      buf.clear();
      append_column_bytes(batch, c, r, std::min(kRowsPerWrite, batch.row_count - r), buf);
      writer.append(c, buf);
    }
  }
  writer.finish();
  return writer.bytes_written();
}

ColumnBatch read_column_file(std::istream& in) {
  ColumnFileReader reader(in);
  ColumnBatch batch = make_empty_batch(reader.header());
  while (auto chunk = reader.next(1 << 16)) {
    append_column_elements(batch, chunk->column, chunk->bytes);
  }
  return batch;
}

void write_column_file(const ColumnBatch& batch, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing", 0);
  write_column_file(batch, out);
}

ColumnBatch read_column_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading", 0);
  return read_column_file(in);
}

}  // namespace minipipe
