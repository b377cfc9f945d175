#pragma once
// A MiniPipe slot: one pipeline spec, its private vocabulary state, and the
// streaming executor that runs a column source through it.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <stop_token>
#include <thread>
#include <vector>

#include "minipipe/bounded_queue.hpp"
#include "minipipe/ops.hpp"
#include "minipipe/pipeline_spec.hpp"
#include "minipipe/source.hpp"

namespace minipipe {

enum class SlotStatus : std::uint8_t { kIdle, kRunning, kQuiescing };

std::string_view to_string(SlotStatus status);

struct RunOptions {
  /// OpenMP threads used by the kernels inside this slot.
  int column_threads = 1;
  /// Checked at every frame boundary; a stop request preempts the run.
  std::stop_token stop;
  /// Map unseen values to the out-of-vocabulary bucket instead of failing.
  bool out_of_vocabulary_bucket = false;
  /// Called with 1 and 2 as a stateful run enters each pass.
  std::function<void(int)> on_pass;
};

struct RunStats {
  std::uint64_t rows = 0;
  std::uint64_t input_bytes = 0;   // DATA payload bytes consumed, per pass
  std::uint64_t output_bytes = 0;  // DATA payload bytes emitted
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  double seconds = 0.0;
  bool spooled = false;
};

class MiniPipeSlot {
 public:
  MiniPipeSlot(std::size_t id, PipelineSpec spec);

  std::size_t id() const { return id_; }
  const PipelineSpec& spec() const { return spec_; }
  SlotStatus status() const { return status_.load(); }

  /// Vocabulary tables from the most recent stateful run, one per sparse column.
  const std::vector<VocabTable>& tables() const { return tables_; }

  /// Validates and installs `spec`, discarding private state. Only legal when idle.
  void install(PipelineSpec spec);

  /// Moves to `next`; only idle->running->quiescing->idle is allowed.
  void transition(SlotStatus next);
  /// Every status change so far, starting from the initial idle.
  std::vector<SlotStatus> history() const;

 private:
  friend RunStats run_stateless(MiniPipeSlot&, ColumnSource&, ColumnSink&, const RunOptions&);
  friend RunStats run_stateful(MiniPipeSlot&, ColumnSource&, ColumnSink&, const RunOptions&);

  std::size_t id_;
  PipelineSpec spec_;
  std::atomic<SlotStatus> status_{SlotStatus::kIdle};
  std::vector<VocabTable> tables_;
  mutable std::mutex history_mu_;
  std::vector<SlotStatus> history_{SlotStatus::kIdle};
};

// Every run_* aborts the sink on failure, so a sink sees exactly one of
// end() or abort().

/// Single pass: every element goes through its chain once and is emitted.
/// Requires a stateless spec. Holds at most one input frame and one partial
/// output frame at a time.
RunStats run_stateless(MiniPipeSlot& slot, ColumnSource& source, ColumnSink& sink,
                       const RunOptions& options = {});

/// Two passes over a replayable source: pass 1 builds one vocabulary table
/// per sparse column, pass 2 maps values to indices and runs the dense chain.
/// Throws CapabilityError if the source cannot be rewound.
RunStats run_stateful(MiniPipeSlot& slot, ColumnSource& source, ColumnSink& sink,
                      const RunOptions& options = {});

/// Dispatches on spec().stateful. Non-replayable input to a stateful spec is
/// spooled to a temporary column file under `spool_dir`.
RunStats run_slot(MiniPipeSlot& slot, ColumnSource& source, ColumnSink& sink,
                  const RunOptions& options, const std::filesystem::path& spool_dir);

/// Spool directory: $MINIPIPE_SPOOL_DIR if set, else the system temp dir.
std::filesystem::path default_spool_dir();

/// Tees a one-shot source into a temporary column file on the first pass and
/// replays from that file afterwards. The file is removed on destruction.
class SpoolingSource : public ColumnSource {
 public:
  SpoolingSource(ColumnSource& inner, const std::filesystem::path& dir);
  ~SpoolingSource() override;

  const ColumnFileHeader& header() const override { return header_; }
  std::optional<StreamFrame> next() override;
  bool replayable() const override { return true; }
  void rewind() override;

  const std::filesystem::path& path() const { return path_; }

 private:
  ColumnSource& inner_;
  ColumnFileHeader header_;
  std::filesystem::path path_;
  std::unique_ptr<std::ofstream> out_;
  std::unique_ptr<ColumnFileWriter> writer_;
  std::unique_ptr<ColumnFileSource> replay_;
};

/// Reads `inner` on a helper thread into a bounded queue of `depth` frames,
/// so I/O overlaps compute and a slow consumer back-pressures the producer.
class PrefetchSource : public ColumnSource {
 public:
  PrefetchSource(ColumnSource& inner, std::size_t depth, std::stop_token stop);
  ~PrefetchSource() override;

  const ColumnFileHeader& header() const override { return inner_.header(); }
  std::optional<StreamFrame> next() override;
  bool replayable() const override { return inner_.replayable(); }
  void rewind() override;

 private:
  void start();
  void halt();

  ColumnSource& inner_;
  std::size_t depth_;
  std::stop_token stop_;
  std::unique_ptr<BoundedQueue<StreamFrame>> queue_;
  std::exception_ptr error_;
  std::mutex error_mu_;
  std::jthread reader_;
};

}  // namespace minipipe
