#include "minipipe/engine.hpp"

#include <set>

#include "minipipe/error.hpp"

namespace minipipe {

void EngineConfig::validate() const {
  if (slot_count == 0) throw ParamError("slot_count must be >= 1");
  if (slot_count > 256) throw ParamError("slot_count must fit the 8-bit slot id");
  if (beat_bytes != kBeatBytes) throw ParamError("beat_bytes is fixed at 64");
  if (queue_depth == 0) throw ParamError("queue_depth must be >= 1");
  if (column_threads < 1) throw ParamError("column_threads must be >= 1");
  if (drain_deadline.count() <= 0) throw ParamError("drain_deadline must be positive");
}

Engine::Engine(EngineConfig config, PipelineSpec initial) : config_(std::move(config)) {
  config_.validate();
  initial.validate();
  slots_.reserve(config_.slot_count);
  for (std::size_t i = 0; i < config_.slot_count; ++i) {
    slots_.push_back(std::make_unique<Worker>(i, initial));
  }
  for (auto& w : slots_) {
    w->thread = std::jthread([this, &w = *w](std::stop_token st) { work(w, st); });
  }
}

Engine::~Engine() {
  for (auto& w : slots_) {
    {
      std::lock_guard lock(w->mu);
      w->stop.request_stop();
      w->thread.request_stop();
    }
    w->cv.notify_all();
  }
  for (auto& w : slots_) {
    if (w->thread.joinable()) w->thread.join();
  }
}

Engine::Worker& Engine::worker(std::size_t slot) const {
  if (slot >= slots_.size()) {
    throw SchedulingError("slot " + std::to_string(slot) + " does not exist (engine has " +
                          std::to_string(slots_.size()) + ")");
  }
  return *slots_[slot];
}

void Engine::work(Worker& w, std::stop_token shutdown) {
  for (;;) {
    Task task;
    std::stop_token stop;
    {
      std::unique_lock lock(w.mu);
      w.cv.wait(lock, shutdown, [&] { return w.task.has_value(); });
      if (!w.task) return;
      task = std::move(*w.task);
      w.task.reset();
      stop = w.stop.get_token();
    }
    JobResult result;
    result.slot = w.slot.id();
    try {
      PrefetchSource prefetch(*task.source, config_.queue_depth, stop);
      RunOptions options;
      options.column_threads = config_.column_threads;
      options.stop = stop;
      options.out_of_vocabulary_bucket = task.options.out_of_vocabulary_bucket;
      options.on_pass = task.options.on_pass;
      result.stats = run_slot(w.slot, prefetch, *task.sink, options, config_.spool_dir);
    } catch (...) {
      result.error = std::current_exception();
    }
    {
      std::lock_guard lock(w.mu);
      w.busy = false;
      // A fresh stop source so a preemption does not leak into the next job.
      if (w.stop.stop_requested()) w.stop = std::stop_source();
    }
    w.cv.notify_all();
    task.promise.set_value(std::move(result));
  }
}

std::future<JobResult> Engine::submit(std::size_t slot, ColumnSource& source, ColumnSink& sink,
                                      JobOptions options) {
  Worker& w = worker(slot);
  std::future<JobResult> fut;
  {
    std::lock_guard lock(w.mu);
    if (w.quarantined) throw SchedulingError("slot " + std::to_string(slot) + " is quarantined");
    if (w.busy) throw SchedulingError("slot " + std::to_string(slot) + " already runs a job");
    Task task{&source, &sink, std::move(options), {}};
    fut = task.promise.get_future();
    w.task = std::move(task);
    w.busy = true;
  }
  w.cv.notify_all();
  return fut;
}

ConcurrentReport Engine::run_concurrent(const std::vector<ConcurrentJob>& jobs) {
  if (jobs.size() > slots_.size()) {
    throw SchedulingError(std::to_string(jobs.size()) + " jobs oversubscribe " +
                          std::to_string(slots_.size()) + " slots");
  }
  std::set<std::size_t> seen;
  for (const auto& j : jobs) {
    worker(j.slot);
    if (!seen.insert(j.slot).second) {
      throw SchedulingError("slot " + std::to_string(j.slot) + " assigned to two jobs");
    }
    if (!j.source || !j.sink) throw ParamError("job needs a source and a sink");
  }

  ConcurrentReport report;
  std::vector<std::future<JobResult>> futures;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& j : jobs) futures.push_back(submit(j.slot, *j.source, *j.sink));
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    JobResult r = futures[i].get();
    JobThroughput t;
    t.slot = r.slot;
    t.stats = r.stats;
    t.error = r.error;
    const std::uint64_t bytes = jobs[i].source->header().payload_bytes();
    if (r.ok()) {
      report.bytes += bytes;
      if (r.stats.seconds > 0) t.bytes_per_second = static_cast<double>(bytes) / r.stats.seconds;
    }
    report.jobs.push_back(std::move(t));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (report.seconds > 0) {
    report.aggregate_bytes_per_second = static_cast<double>(report.bytes) / report.seconds;
  }
  return report;
}

void Engine::reconfigure(std::size_t slot, PipelineSpec spec) {
  spec.validate();
  Worker& w = worker(slot);
  std::unique_lock lock(w.mu);
  if (w.quarantined) throw SchedulingError("slot " + std::to_string(slot) + " is quarantined");
  if (w.busy) {
    w.stop.request_stop();
    const bool drained =
        w.cv.wait_for(lock, config_.drain_deadline, [&] { return !w.busy; });
    if (!drained) {
      w.quarantined = true;
      throw TimeoutError("slot " + std::to_string(slot) + " did not drain within " +
                         std::to_string(config_.drain_deadline.count()) +
                         " ms; slot quarantined");
    }
  }
  w.slot.install(std::move(spec));
}

void Engine::cancel(std::size_t slot) {
  Worker& w = worker(slot);
  std::lock_guard lock(w.mu);
  if (w.busy) w.stop.request_stop();
}

SlotInfo Engine::slot_info(std::size_t slot) const {
  Worker& w = worker(slot);
  SlotInfo info;
  info.id = slot;
  {
    std::lock_guard lease(lease_mu_);
    info.leased = w.leased;
  }
  std::lock_guard lock(w.mu);
  info.status = w.slot.status();
  info.busy = w.busy;
  info.quarantined = w.quarantined;
  info.spec = w.slot.spec();  // never swapped while busy
  if (!w.busy) {
    for (const auto& t : w.slot.tables()) info.table_sizes.push_back(t.size());
  }
  return info;
}

std::optional<std::size_t> Engine::acquire_slot() {
  std::lock_guard lease(lease_mu_);
  for (auto& w : slots_) {
    if (w->leased) continue;
    std::lock_guard lock(w->mu);
    if (w->quarantined || w->busy) continue;
    w->leased = true;
    return w->slot.id();
  }
  return std::nullopt;
}

void Engine::release_slot(std::size_t slot) {
  Worker& w = worker(slot);
  std::lock_guard lease(lease_mu_);
  w.leased = false;
}

std::size_t Engine::free_slots() const {
  std::lock_guard lease(lease_mu_);
  std::size_t n = 0;
  for (const auto& w : slots_) {
    std::lock_guard lock(w->mu);
    if (!w->leased && !w->quarantined && !w->busy) ++n;
  }
  return n;
}

}  // namespace minipipe
