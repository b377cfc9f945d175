#include "minipipe/slot.hpp"

#include <unistd.h>

#include <cstdlib>
#include <cstring>

#include "minipipe/error.hpp"
#include "minipipe/kernels.hpp"

namespace minipipe {

std::string_view to_string(SlotStatus status) {
  switch (status) {
    case SlotStatus::kIdle: return "idle";
    case SlotStatus::kRunning: return "running";
    case SlotStatus::kQuiescing: return "quiescing";
  }
  return "unknown";
}

MiniPipeSlot::MiniPipeSlot(std::size_t id, PipelineSpec spec) : id_(id) {
  if (id > 0xFF) throw ParamError("slot id must fit in 8 bits");
  spec.validate();
  spec_ = std::move(spec);
}

void MiniPipeSlot::install(PipelineSpec spec) {
  spec.validate();
  if (status() != SlotStatus::kIdle) {
    throw SchedulingError("slot " + std::to_string(id_) + " is " +
                          std::string(to_string(status())) + "; spec swap needs an idle slot");
  }
  spec_ = std::move(spec);
  tables_.clear();
}

void MiniPipeSlot::transition(SlotStatus next) {
  const SlotStatus cur = status_.load();
  const bool ok = (cur == SlotStatus::kIdle && next == SlotStatus::kRunning) ||
                  (cur == SlotStatus::kRunning && next == SlotStatus::kQuiescing) ||
                  (cur == SlotStatus::kQuiescing && next == SlotStatus::kIdle);
  if (!ok) {
    throw SchedulingError("illegal slot transition " + std::string(to_string(cur)) + " -> " +
                          std::string(to_string(next)));
  }
  status_.store(next);
  std::lock_guard lock(history_mu_);
  history_.push_back(next);
}

std::vector<SlotStatus> MiniPipeSlot::history() const {
  std::lock_guard lock(history_mu_);
  return history_;
}

namespace {

// Re-raises the in-flight operator error with the column filled in.
[[noreturn]] void rethrow_with_column(std::size_t column) {
  try {
    throw;
  } catch (const ParseError& e) {
    throw ParseError(std::string(e.what()) + " (column " + std::to_string(column) + ")", e.row(),
                     e.position(), column);
  } catch (const UnknownValueError& e) {
    throw UnknownValueError(std::string(e.what()) + " (column " + std::to_string(column) + ")",
                            e.value(), e.row(), column);
  } catch (const DomainError& e) {
    throw DomainError(std::string(e.what()) + " (column " + std::to_string(column) + ")", e.row(),
                      column);
  } catch (const RangeError& e) {
    throw RangeError(std::string(e.what()) + " (column " + std::to_string(column) + ")", e.row(),
                     column);
  }
}

/// Enforces column order, whole elements, and exact per-column row counts.
class StreamValidator {
 public:
  explicit StreamValidator(const ColumnFileHeader& header) : header_(header) {}

  /// Returns the row of the frame's first element.
  std::uint64_t accept(const StreamFrame& f) {
    const auto& h = f.header;
    if (h.type != FrameType::kData || h.column_index == kControlColumn) {
      throw ProtocolError("unexpected " + std::string(to_string(h.type)) +
                          " frame inside column stream (sequence " + std::to_string(h.sequence) +
                          ")");
    }
    const std::size_t c = h.column_index;
    if (c >= header_.column_count()) {
      throw ProtocolError("DATA frame for column " + std::to_string(c) + " but stream has " +
                          std::to_string(header_.column_count()) + " columns");
    }
    if (c < column_) {
      throw ProtocolError("DATA frame for column " + std::to_string(c) + " after column " +
                          std::to_string(column_));
    }
    while (column_ < c) close_column();
    const std::size_t width = header_.element_width(c);
    if (f.payload.size() % width != 0) {
      throw ProtocolError("DATA frame splits an element (column " + std::to_string(c) +
                          ", sequence " + std::to_string(h.sequence) + ")");
    }
    const std::uint64_t first = rows_;
    rows_ += f.payload.size() / width;
    if (rows_ > header_.row_count) {
      throw LengthError("column " + std::to_string(c) + " carries more than " +
                            std::to_string(header_.row_count) + " rows",
                        c);
    }
    return first;
  }

  void finish() {
    while (column_ < header_.column_count()) close_column();
  }

 private:
  void close_column() {
    if (rows_ != header_.row_count) {
      throw LengthError("column " + std::to_string(column_) + " ended after " +
                            std::to_string(rows_) + " of " + std::to_string(header_.row_count) +
                            " rows",
                        column_);
    }
    ++column_;
    rows_ = 0;
  }

  const ColumnFileHeader& header_;
  std::size_t column_ = 0;
  std::uint64_t rows_ = 0;
};

/// Applies the spec to frames and writes re-framed output to the sink.
class Executor {
 public:
  Executor(const PipelineSpec& spec, const ColumnFileHeader& input, ColumnSink& sink,
           std::uint8_t slot, const RunOptions& options, RunStats& stats)
      : spec_(spec),
        input_(input),
        output_(spec.output_header(input)),
        sink_(sink),
        slot_(slot),
        options_(options),
        stats_(stats) {}

  const ColumnFileHeader& output_header() const { return output_; }

  void begin() { sink_.begin(output_); }

  /// Runs one frame. `tables` is non-null in the mapping pass of a stateful run.
  void process(const StreamFrame& f, std::uint64_t first_row,
               const std::vector<VocabTable>* tables) {
    const std::size_t c = f.header.column_index;
    try {
      if (input_.is_dense(c)) {
        process_dense(c, f.payload, first_row);
      } else {
        process_sparse(c, f.payload, first_row, tables);
      }
    } catch (const OperatorError&) {
      rethrow_with_column(c);
    }
  }

  void finish() {
    if (framer_) framer_->finish();
    framer_.reset();
    sink_.end();
  }

 private:
  void emit(std::size_t column, std::span<const std::byte> bytes) {
    if (!framer_ || framer_column_ != column) {
      if (framer_) framer_->finish();
      framer_column_ = column;
      framer_.emplace(slot_, static_cast<std::uint16_t>(column), output_.element_width(column),
                      seq_, [this](StreamFrame&& out) {
                        stats_.output_bytes += out.payload.size();
                        ++stats_.frames_out;
                        sink_.write(std::move(out));
                      });
    }
    framer_->push(bytes);
  }

  void process_dense(std::size_t c, std::span<const std::byte> payload, std::uint64_t first_row) {
    const std::size_t n = payload.size() / sizeof(float);
    floats_.resize(n);
    std::memcpy(floats_.data(), payload.data(), payload.size());
    kernels::dense_chain(spec_.dense_chain, floats_, first_row, options_.column_threads);
    emit(c, std::as_bytes(std::span(floats_)));
  }

  void process_sparse(std::size_t c, std::span<const std::byte> payload, std::uint64_t first_row,
                      const std::vector<VocabTable>* tables) {
    if (spec_.sparse_chain.empty()) {
      emit(c, payload);
      return;
    }
    const unsigned width = input_.sparse_token_width;
    const std::size_t n = payload.size() / width;
    values_.resize(n);
    kernels::parse_hex({reinterpret_cast<const char*>(payload.data()), payload.size()}, width,
                       values_, first_row, options_.column_threads);
    if (spec_.has(OperatorKind::kModulus)) {
      kernels::modulus(values_, spec_.params.modulus, options_.column_threads);
    }
    if (spec_.output_kind() == SparseKind::kIndex32) {
      if (!tables) throw CapabilityError("vocab_map needs tables from a generation pass");
      const std::size_t s = c - input_.dense_count;
      indices_.resize(n);
      VocabMapOptions map_options;
      map_options.out_of_vocabulary_bucket = options_.out_of_vocabulary_bucket;
      try {
        kernels::vocab_map((*tables)[s], values_, indices_, first_row, map_options,
                           options_.column_threads);
      } catch (const UnknownValueError& e) {
        throw UnknownValueError(
            std::string("internal consistency: second pass saw a value the first pass did not: ") +
                e.what(),
            e.value(), e.row());
      }
      emit(c, std::as_bytes(std::span(indices_)));
      return;
    }
    emit(c, std::as_bytes(std::span(values_)));
  }

  const PipelineSpec& spec_;
  const ColumnFileHeader input_;
  const ColumnFileHeader output_;
  ColumnSink& sink_;
  std::uint8_t slot_;
  const RunOptions& options_;
  RunStats& stats_;
  SequenceCounter seq_;
  std::optional<ColumnFramer> framer_;
  std::size_t framer_column_ = 0;
  std::vector<float> floats_;
  std::vector<std::uint64_t> values_;
  std::vector<std::uint32_t> indices_;
};

/// Moves the slot through running -> quiescing -> idle around a run, and
/// aborts the sink if the run throws.
template <typename Body>
RunStats guarded_run(MiniPipeSlot& slot, ColumnSink& sink, Body&& body) {
  if (slot.status() != SlotStatus::kIdle) {
    throw SchedulingError("slot " + std::to_string(slot.id()) + " is already " +
                          std::string(to_string(slot.status())));
  }
  slot.transition(SlotStatus::kRunning);
  RunStats stats;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(stats);
  } catch (const std::exception& e) {
    slot.transition(SlotStatus::kQuiescing);
    slot.transition(SlotStatus::kIdle);
    sink.abort(e.what());
    throw;
  }
  slot.transition(SlotStatus::kQuiescing);
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  slot.transition(SlotStatus::kIdle);
  return stats;
}

void check_stop(const RunOptions& options) {
  if (options.stop.stop_requested()) {
    throw PreemptedError("run preempted at a frame boundary");
  }
}

}  // namespace

RunStats run_stateless(MiniPipeSlot& slot, ColumnSource& source, ColumnSink& sink,
                       const RunOptions& options) {
  return guarded_run(slot, sink, [&](RunStats& stats) {
    if (slot.spec().stateful) {
      throw CapabilityError("run_stateless called with stateful spec '" + slot.spec().id + "'");
    }
    const ColumnFileHeader input = source.header();
    Executor exec(slot.spec(), input, sink, static_cast<std::uint8_t>(slot.id()), options, stats);
    StreamValidator validator(input);
    stats.rows = input.row_count;
    exec.begin();
    for (;;) {
      check_stop(options);
      auto f = source.next();
      if (!f) break;
      const auto first_row = validator.accept(*f);
      stats.input_bytes += f->payload.size();
      ++stats.frames_in;
      exec.process(*f, first_row, nullptr);
    }
    validator.finish();
    exec.finish();
  });
}

RunStats run_stateful(MiniPipeSlot& slot, ColumnSource& source, ColumnSink& sink,
                      const RunOptions& options) {
  return guarded_run(slot, sink, [&](RunStats& stats) {
    if (!slot.spec().stateful) {
      throw CapabilityError("run_stateful called with stateless spec '" + slot.spec().id + "'");
    }
    if (!source.replayable()) {
      throw CapabilityError("stateful pipeline '" + slot.spec().id +
                            "' needs a replayable source for its second pass");
    }
    const PipelineSpec& spec = slot.spec();
    const ColumnFileHeader input = source.header();
    // Resolve the output schema up front so a mismatch fails before pass 1.
    Executor exec(spec, input, sink, static_cast<std::uint8_t>(slot.id()), options, stats);
    stats.rows = input.row_count;

    std::vector<VocabTable> tables;
    tables.reserve(input.sparse_count);
    for (std::size_t s = 0; s < input.sparse_count; ++s) tables.emplace_back(spec.params.modulus);

    // Pass 1: hex2int -> modulus -> vocab_gen.
    if (options.on_pass) options.on_pass(1);
    {
      StreamValidator validator(input);
      std::vector<std::uint64_t> values;
      const unsigned width = input.sparse_token_width;
      for (;;) {
        check_stop(options);
        auto f = source.next();
        if (!f) break;
        const auto first_row = validator.accept(*f);
        stats.input_bytes += f->payload.size();
        ++stats.frames_in;
        const std::size_t c = f->header.column_index;
        if (input.is_dense(c)) continue;
        try {
          values.resize(f->payload.size() / width);
          kernels::parse_hex({reinterpret_cast<const char*>(f->payload.data()), f->payload.size()},
                             width, values, first_row, options.column_threads);
          kernels::modulus(values, spec.params.modulus, options.column_threads);
          kernels::vocab_gen(tables[c - input.dense_count], values, first_row);
        } catch (const OperatorError&) {
          rethrow_with_column(c);
        }
      }
      validator.finish();
    }
    for (auto& t : tables) t.freeze();
    slot.tables_ = std::move(tables);

    // Pass 2: dense chain, and hex2int -> modulus -> vocab_map.
    source.rewind();
    if (options.on_pass) options.on_pass(2);
    StreamValidator validator(input);
    exec.begin();
    for (;;) {
      check_stop(options);
      auto f = source.next();
      if (!f) break;
      const auto first_row = validator.accept(*f);
      stats.input_bytes += f->payload.size();
      ++stats.frames_in;
      exec.process(*f, first_row, &slot.tables_);
    }
    validator.finish();
    exec.finish();
  });
}

std::filesystem::path default_spool_dir() {
  if (const char* env = std::getenv("MINIPIPE_SPOOL_DIR"); env && *env) return env;
  return std::filesystem::temp_directory_path();
}

RunStats run_slot(MiniPipeSlot& slot, ColumnSource& source, ColumnSink& sink,
                  const RunOptions& options, const std::filesystem::path& spool_dir) {
  if (!slot.spec().stateful) return run_stateless(slot, source, sink, options);
  if (source.replayable()) return run_stateful(slot, source, sink, options);
  std::optional<SpoolingSource> spool;
  try {
    spool.emplace(source, spool_dir.empty() ? default_spool_dir() : spool_dir);
  } catch (const std::exception& e) {
    sink.abort(e.what());
    throw;
  }
  RunStats stats = run_stateful(slot, *spool, sink, options);
  stats.spooled = true;
  return stats;
}

// ---------------------------------------------------------------------------

SpoolingSource::SpoolingSource(ColumnSource& inner, const std::filesystem::path& dir)
    : inner_(inner), header_(inner.header()) {
  static std::atomic<std::uint64_t> counter{0};
  std::filesystem::create_directories(dir);
  path_ = dir / ("minipipe-spool-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)) + ".col");
  out_ = std::make_unique<std::ofstream>(path_, std::ios::binary | std::ios::trunc);
  if (!*out_) throw IoError("cannot create spool file '" + path_.string() + "'", 0);
  writer_ = std::make_unique<ColumnFileWriter>(*out_, header_);
}

SpoolingSource::~SpoolingSource() {
  replay_.reset();
  writer_.reset();
  out_.reset();
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

std::optional<StreamFrame> SpoolingSource::next() {
  if (replay_) return replay_->next();
  auto f = inner_.next();
  if (f) writer_->append(f->header.column_index, f->payload);
  return f;
}

void SpoolingSource::rewind() {
  if (!replay_) {
    // Drain whatever the first pass left unread so the spool is complete.
    while (auto f = inner_.next()) writer_->append(f->header.column_index, f->payload);
    writer_->finish();
    writer_.reset();
    out_->close();
    out_.reset();
    replay_ = ColumnFileSource::open_file(path_);
    return;
  }
  replay_->rewind();
}

// ---------------------------------------------------------------------------

PrefetchSource::PrefetchSource(ColumnSource& inner, std::size_t depth, std::stop_token stop)
    : inner_(inner), depth_(depth), stop_(std::move(stop)) {
  start();
}

PrefetchSource::~PrefetchSource() { halt(); }

void PrefetchSource::start() {
  queue_ = std::make_unique<BoundedQueue<StreamFrame>>(depth_);
  error_ = nullptr;
  reader_ = std::jthread([this](std::stop_token st) {
    try {
      while (!st.stop_requested() && !stop_.stop_requested()) {
        auto f = inner_.next();
        if (!f) break;
        if (!queue_->push(std::move(*f), st)) break;
      }
    } catch (...) {
      std::lock_guard lock(error_mu_);
      error_ = std::current_exception();
    }
    queue_->close();
  });
}

void PrefetchSource::halt() {
  if (reader_.joinable()) {
    reader_.request_stop();
    queue_->close();
    reader_.join();
  }
}

std::optional<StreamFrame> PrefetchSource::next() {
  auto f = queue_->pop(stop_);
  if (f) return f;
  if (stop_.stop_requested()) throw PreemptedError("run preempted at a frame boundary");
  std::lock_guard lock(error_mu_);
  if (error_) std::rethrow_exception(error_);
  return std::nullopt;
}

void PrefetchSource::rewind() {
  halt();
  inner_.rewind();
  start();
}

}  // namespace minipipe
