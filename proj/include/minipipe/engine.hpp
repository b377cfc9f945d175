#pragma once
// Multi-tenant engine: a fixed set of MiniPipe slots, one worker thread per
// slot, at most one job per slot at a time.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <thread>
#include <vector>

#include "minipipe/pipeline_spec.hpp"
#include "minipipe/slot.hpp"
#include "minipipe/source.hpp"

namespace minipipe {

struct EngineConfig {
  std::size_t slot_count = 7;
  std::size_t beat_bytes = kBeatBytes;
  /// In-flight frames per slot; also the arbiter reorder window.
  std::size_t queue_depth = 16;
  int column_threads = 1;
  std::chrono::milliseconds drain_deadline{100};
  /// Empty means default_spool_dir().
  std::filesystem::path spool_dir;

  /// Throws ParamError.
  void validate() const;
};

struct JobResult {
  std::size_t slot = 0;
  RunStats stats;
  std::exception_ptr error;

  bool ok() const { return !error; }
  void rethrow() const {
    if (error) std::rethrow_exception(error);
  }
};

struct JobOptions {
  bool out_of_vocabulary_bucket = false;
  std::function<void(int)> on_pass;
};

struct SlotInfo {
  std::size_t id = 0;
  PipelineSpec spec;
  SlotStatus status = SlotStatus::kIdle;
  bool busy = false;
  bool quarantined = false;
  bool leased = false;
  /// Vocabulary sizes from the last stateful run; empty while a job runs.
  std::vector<std::size_t> table_sizes;
};

struct ConcurrentJob {
  std::size_t slot = 0;
  ColumnSource* source = nullptr;
  ColumnSink* sink = nullptr;
};

struct JobThroughput {
  std::size_t slot = 0;
  RunStats stats;
  /// Input dataset payload bytes over the job's own run time.
  double bytes_per_second = 0.0;
  std::exception_ptr error;
};

struct ConcurrentReport {
  std::vector<JobThroughput> jobs;
  double seconds = 0.0;
  std::uint64_t bytes = 0;
  /// Sum of input payload bytes over wall time of the whole batch of jobs.
  double aggregate_bytes_per_second = 0.0;
};

class Engine {
 public:
  explicit Engine(EngineConfig config = {}, PipelineSpec initial = *preset("P-I"));
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const { return config_; }
  std::size_t slot_count() const { return slots_.size(); }

  /// Starts `source` -> slot -> `sink` on the slot's worker. Both must
  /// outlive the returned future. Throws SchedulingError if the slot is busy
  /// or quarantined.
  std::future<JobResult> submit(std::size_t slot, ColumnSource& source, ColumnSink& sink,
                                JobOptions options = {});

  /// Runs every job concurrently and waits for all of them. Throws
  /// SchedulingError on more jobs than slots or a repeated slot.
  ConcurrentReport run_concurrent(const std::vector<ConcurrentJob>& jobs);

  /// Quiesce-and-swap. A running job is preempted at its next frame boundary
  /// and its sink aborted; then `spec` is installed and slot state dropped.
  /// Throws SpecError (old spec kept) or, past the drain deadline,
  /// TimeoutError with the slot quarantined.
  void reconfigure(std::size_t slot, PipelineSpec spec);

  /// Preempts the running job, if any. Does not wait.
  void cancel(std::size_t slot);

  SlotInfo slot_info(std::size_t slot) const;

  /// Leases a free, healthy slot for exclusive use, or nullopt.
  std::optional<std::size_t> acquire_slot();
  void release_slot(std::size_t slot);
  std::size_t free_slots() const;

 private:
  struct Task {
    ColumnSource* source;
    ColumnSink* sink;
    JobOptions options;
    std::promise<JobResult> promise;
  };

  struct Worker {
    explicit Worker(std::size_t id, const PipelineSpec& spec) : slot(id, spec) {}
    MiniPipeSlot slot;
    mutable std::mutex mu;
    std::condition_variable_any cv;
    std::optional<Task> task;
    bool busy = false;
    bool quarantined = false;
    bool leased = false;
    std::stop_source stop;
    std::jthread thread;
  };

  Worker& worker(std::size_t slot) const;
  void work(Worker& w, std::stop_token shutdown);

  EngineConfig config_;
  std::vector<std::unique_ptr<Worker>> slots_;
  mutable std::mutex lease_mu_;
};

}  // namespace minipipe
