// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// nonzero iff any criterion fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "gated_source.hpp"
#include "minipipe/bench.hpp"
#include "minipipe/engine.hpp"
#include "minipipe/error.hpp"
#include "minipipe/ops.hpp"
#include "minipipe/oracle.hpp"
#include "minipipe/service.hpp"

using namespace minipipe;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Verdict::kSkip, std::move(d)}; }

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ColumnBatch run_engine(Engine& engine, std::size_t slot, const ColumnBatch& batch) {
  BatchSource source(std::make_shared<const ColumnBatch>(batch));
  BatchSink sink;
  engine.submit(slot, source, sink).get().rethrow();
  return sink.take();
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  const std::vector<std::string> names = preset_names();
  EngineConfig config;
  config.slot_count = names.size();
  Engine engine(config);
  for (std::size_t i = 0; i < names.size(); ++i) engine.reconfigure(i, *preset(names[i]));

  std::mt19937_64 rng(20240611);
  std::size_t compared = 0, max_rows = 0;
  for (int b = 0; b < 50; ++b) {
    const bool d2 = b % 2 == 1;
    std::uint64_t rows;
    if (b == 0 || b == 1) rows = 100'000;  // both shapes at the upper bound
    else rows = 1 + rng() % (d2 ? 10'000 : 100'000);
    const DatasetSpec d = d2 ? DatasetSpec::d2(rows, rng()) : DatasetSpec::d1(rows, rng());
    const ColumnBatch batch = generate_synthetic(d);
    max_rows = std::max<std::size_t>(max_rows, rows);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const ColumnBatch got = run_engine(engine, i, batch);
      const ColumnBatch want =
          oracle_run(batch, *preset(names[i])).to_batch(batch.row_count, batch.token_width);
      if (!(got == want)) {
        return fail(fmt("batch %d (%s, %llu rows) differs under %s", b, d2 ? "D-II" : "D-I",
                        static_cast<unsigned long long>(rows), names[i].c_str()));
      }
      ++compared;
    }
  }
  const double secs = since(t0);
  const std::string detail = fmt("%zu batch/preset pairs bit-identical, max %zu rows, %.1f s",
                                 compared, max_rows, secs);
  if (secs >= 300.0) return fail(detail + " (limit 300 s)");
  return pass(detail);
}

// ---------------------------------------------------------------------------

Outcome vocabulary_semantics() {
  std::mt19937_64 rng(77);
  std::vector<std::uint64_t> raw(1'000'000);
  // Zipf-like skew: many repeats plus a long tail.
  for (auto& v : raw) {
    const std::uint64_t r = rng();
    v = (r & 1) ? (r >> 1) % 5000 : rng();
  }
  std::string notes;
  for (std::uint64_t m : {kSmallVocab, kLargeVocab}) {
    std::vector<std::uint64_t> values(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) values[i] = raw[i] % m;

    const VocabTable table = vocab_gen(values, m);

    // Brute force: ordered map, scanning for first occurrences.
    std::map<std::uint64_t, std::uint32_t> first;
    std::vector<std::uint64_t> order;
    for (std::uint64_t v : values) {
      if (first.find(v) == first.end()) {
        first.emplace(v, static_cast<std::uint32_t>(order.size()));
        order.push_back(v);
      }
    }
    if (table.size() > m) return fail(fmt("M=%llu: table size %zu exceeds M",
                                          static_cast<unsigned long long>(m), table.size()));
    if (table.keys() != order) {
      return fail(fmt("M=%llu: key order differs from first-occurrence scan",
                      static_cast<unsigned long long>(m)));
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (table.find(order[i]) != static_cast<std::uint32_t>(i)) {
        return fail(fmt("M=%llu: first occurrence #%zu not mapped to %zu",
                        static_cast<unsigned long long>(m), i, i));
      }
    }
    const auto mapped = vocab_map(values, table);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (mapped[i] != first.at(values[i])) {
        return fail(fmt("M=%llu: vocab_map disagrees at row %zu",
                        static_cast<unsigned long long>(m), i));
      }
    }
    notes += fmt("M=%llu size=%zu; ", static_cast<unsigned long long>(m), table.size());
  }
  return pass(notes + "10^6 values, exact");
}

// ---------------------------------------------------------------------------

std::size_t rss_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmRSS:", 0) == 0) return std::stoull(line.substr(6)) * 1024;
  }
  return 0;
}

/// Peak resident set while `body` runs, sampled every 2 ms.
std::size_t peak_rss_during(const std::function<void()>& body) {
  std::atomic<bool> done{false};
  std::atomic<std::size_t> peak{rss_bytes()};
  std::jthread sampler([&] {
    while (!done) {
      const std::size_t r = rss_bytes();
      if (r > peak) peak = r;
      std::this_thread::sleep_for(2ms);
    }
  });
  body();
  done = true;
  sampler.join();
  return std::max<std::size_t>(peak, rss_bytes());
}

Outcome streaming_memory() {
  constexpr std::size_t kBound = 64ull << 20;
  EngineConfig config;
  config.slot_count = 1;
  Engine engine(config, *preset("P-I"));
  auto stream = [&](std::uint64_t rows, std::uint64_t& out_bytes) {
    SyntheticSource source(DatasetSpec::d1(rows, 5));
    CountingSink sink;
    engine.submit(0, source, sink).get().rethrow();
    out_bytes = sink.bytes();
  };
  std::uint64_t small_out = 0, large_out = 0;
  // Warm up allocator pools and thread stacks before taking the baseline.
  stream(100'000, small_out);
  const std::size_t baseline = rss_bytes();
  const std::size_t peak_small = peak_rss_during([&] { stream(1'000'000, small_out); });
  const auto t0 = Clock::now();
  const std::size_t peak_large = peak_rss_during([&] { stream(10'000'000, large_out); });
  const double secs = since(t0);
  const double mib = 1024.0 * 1024.0;
  const std::string detail = fmt(
      "baseline %.1f MiB, peak growth 10^6 rows %.1f MiB, 10^7 rows %.1f MiB "
      "(bound %.0f MiB above baseline); 10^7 rows streamed %.2f GB out in %.1f s",
      baseline / mib, (peak_small - std::min(peak_small, baseline)) / mib,
      (peak_large - std::min(peak_large, baseline)) / mib, kBound / mib, large_out / 1e9, secs);
  if (large_out == 0) return fail(detail + "; no output");
  if (peak_large > baseline + kBound) return fail(detail);
  // Independent of row count: ten times the rows may not cost more than a few MiB extra.
  if (peak_large > peak_small + (8ull << 20)) return fail(detail + "; grows with row count");
  return pass(detail);
}

// ---------------------------------------------------------------------------

Outcome multi_tenant_scaling() {
  const unsigned cores = std::thread::hardware_concurrency();
  const bool eligible = cores >= 8;
  BenchOptions options;
  options.trials = 5;
  options.warmups = 1;
  const std::uint64_t rows = eligible ? 1'000'000 : 200'000;
  const auto reports = bench_pipeline(*preset("P-I"), DatasetSpec::d1(rows, 11), {1, 4}, options);
  const double one = static_cast<double>(reports[0].bytes) / median(reports[0].seconds);
  const double four = static_cast<double>(reports[1].bytes) / median(reports[1].seconds);
  const double ratio = four / one;
  const std::string detail =
      fmt("4-slot/1-slot aggregate P-I throughput %.2fx (%.0f vs %.0f MB/s, median of 5, "
          "%llu rows/job, %u cores)",
          ratio, four / 1e6, one / 1e6, static_cast<unsigned long long>(rows), cores);
  if (!eligible) return skip(detail + "; needs >= 8 cores");
  return ratio >= 3.2 ? pass(detail) : fail(detail + "; need >= 3.20x");
}

// ---------------------------------------------------------------------------

Outcome reconfiguration_isolation() {
  const std::vector<std::string> specs{"P-I", "P-III", "P-I", "P-II"};
  std::vector<std::shared_ptr<const ColumnBatch>> inputs;
  for (std::uint64_t s = 0; s < 4; ++s) {
    inputs.push_back(std::make_shared<const ColumnBatch>(
        generate_synthetic(DatasetSpec::d1(60'000, 100 + s))));
  }
  EngineConfig config;
  config.slot_count = 4;

  // Undisturbed differential run.
  std::vector<ColumnBatch> reference(4);
  {
    Engine engine(config);
    for (std::size_t s = 0; s < 4; ++s) engine.reconfigure(s, *preset(specs[s]));
    for (std::size_t s = 0; s < 4; ++s) reference[s] = run_engine(engine, s, *inputs[s]);
  }

  Engine engine(config);
  for (std::size_t s = 0; s < 4; ++s) engine.reconfigure(s, *preset(specs[s]));
  // Slots 0, 1, 3 park mid-stream; slot 2 streams a long synthetic input.
  std::vector<std::unique_ptr<minipipe::testing::GatedSource>> gated(4);
  std::vector<BatchSink> sinks(4);
  std::vector<std::future<JobResult>> futures(4);
  for (std::size_t s : {0u, 1u, 3u}) {
    gated[s] = std::make_unique<minipipe::testing::GatedSource>(
        std::make_unique<BatchSource>(inputs[s]), 20);
    futures[s] = engine.submit(s, *gated[s], sinks[s]);
  }
  SyntheticSource endless(DatasetSpec::d1(10'000'000, 7));
  CountingSink victim;
  futures[2] = engine.submit(2, endless, victim);
  for (std::size_t s : {0u, 1u, 3u}) gated[s]->wait_until_blocked();
  while (victim.frames() < 4) std::this_thread::sleep_for(1ms);

  const auto t_busy = Clock::now();
  try {
    engine.reconfigure(2, *preset("P-II"));
  } catch (const TimeoutError& e) {
    for (std::size_t s : {0u, 1u, 3u}) gated[s]->open();
    return fail(std::string("swap of the running slot timed out: ") + e.what());
  }
  const double busy_ms = since(t_busy) * 1e3;
  for (std::size_t s : {0u, 1u, 3u}) gated[s]->open();

  const JobResult preempted = futures[2].get();
  if (preempted.ok()) return fail("running job on the reconfigured slot was not preempted");
  for (std::size_t s : {0u, 1u, 3u}) {
    const JobResult r = futures[s].get();
    if (!r.ok()) return fail(fmt("bystander slot %zu failed", s));
    if (!(sinks[s].batch() == reference[s])) {
      return fail(fmt("bystander slot %zu output differs from the undisturbed run", s));
    }
  }

  // Swap on an idle queue, timed against the drain deadline.
  std::vector<double> idle_ms;
  for (int i = 0; i < 5; ++i) {
    const auto t0 = Clock::now();
    engine.reconfigure(2, *preset(i % 2 ? "P-II" : "P-III"));
    idle_ms.push_back(since(t0) * 1e3);
  }
  const double worst = *std::max_element(idle_ms.begin(), idle_ms.end());
  const ColumnBatch after = run_engine(engine, 2, *inputs[2]);
  const ColumnBatch want = oracle_run(*inputs[2], *preset("P-III")).to_batch(60'000, 8);
  const std::string detail =
      fmt("3 bystanders bit-identical; running swap %.2f ms, idle swap worst %.3f ms "
          "(deadline %lld ms)",
          busy_ms, worst, static_cast<long long>(config.drain_deadline.count()));
  if (!(after == want)) return fail(detail + "; reconfigured slot output wrong");
  if (worst >= static_cast<double>(config.drain_deadline.count())) return fail(detail);
  return pass(detail);
}

// ---------------------------------------------------------------------------

/// Counts spool files visible when output starts arriving.
class SpoolProbe : public BatchSink {
 public:
  explicit SpoolProbe(std::filesystem::path dir) : dir_(std::move(dir)) {}
  void begin(const ColumnFileHeader& h) override {
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir_)) ++seen;
    BatchSink::begin(h);
  }
  std::size_t seen = 0;

 private:
  std::filesystem::path dir_;
};

Outcome remote_local_equivalence() {
  const auto spool = std::filesystem::temp_directory_path() /
                     ("minipipe-accept-spool-" + std::to_string(::getpid()));
  std::filesystem::create_directories(spool);
  struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(p, ec);
    }
  } cleanup{spool};

  EngineConfig config;
  config.spool_dir = spool;
  auto server = serve({"127.0.0.1", 0}, config);
  Engine local;

  std::vector<DatasetSpec> datasets{DatasetSpec::d1(100'000, 1), DatasetSpec::d1(1, 2),
                                    DatasetSpec::d1(33'333, 3), DatasetSpec::d2(5'000, 4)};
  std::size_t pairs = 0, spooled = 0;
  for (const auto& d : datasets) {
    const auto batch = std::make_shared<const ColumnBatch>(generate_synthetic(d));
    for (const auto& name : preset_names()) {
      local.reconfigure(0, *preset(name));
      const ColumnBatch want = run_engine(local, 0, *batch);
      ServiceClient client(server->endpoint());
      client.configure(name);
      BatchSource source(batch);
      SpoolProbe sink(spool);
      client.process(source, sink);
      if (!(sink.batch() == want)) {
        return fail(fmt("%s over %llu rows differs from the local engine", name.c_str(),
                        static_cast<unsigned long long>(d.rows)));
      }
      if (preset(name)->stateful) {
        if (sink.seen == 0) return fail(name + ": no spool file during the second pass");
        ++spooled;
      }
      ++pairs;
    }
  }
  server->stop();
  std::size_t left = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(spool)) ++left;
  const std::string detail =
      fmt("%zu preset/batch pairs bit-identical over loopback, %zu via spooled second pass",
          pairs, spooled);
  if (left) return fail(detail + fmt("; %zu spool files leaked", left));
  return pass(detail);
}

// ---------------------------------------------------------------------------

Outcome stateful_ordering() {
  const auto batch =
      std::make_shared<const ColumnBatch>(generate_synthetic(DatasetSpec::d1(1'000'000, 9)));
  EngineConfig config;
  config.slot_count = 1;
  Engine engine(config);
  std::map<std::string, double> med;
  for (const auto& name : preset_names()) {
    engine.reconfigure(0, *preset(name));
    std::vector<double> times;
    for (int i = 0; i < 6; ++i) {
      BatchSource source(batch);
      CountingSink sink;
      const auto t0 = Clock::now();
      engine.submit(0, source, sink).get().rethrow();
      if (i > 0) times.push_back(since(t0));  // first run is a warm-up
    }
    med[name] = median(times);
  }
  const std::string detail = fmt("median of 5 single-slot runs, 10^6 D-I rows: P-I %.3f s, "
                                 "P-II %.3f s, P-III %.3f s",
                                 med["P-I"], med["P-II"], med["P-III"]);
  if (med["P-III"] > med["P-II"] && med["P-II"] > med["P-I"]) return pass(detail);
  return fail(detail + "; expected P-III > P-II > P-I");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"oracle-equivalence", oracle_equivalence},
      {"vocabulary-semantics", vocabulary_semantics},
      {"streaming-memory-bound", streaming_memory},
      {"multi-tenant-scaling", multi_tenant_scaling},
      {"reconfiguration-isolation", reconfiguration_isolation},
      {"remote-local-equivalence", remote_local_equivalence},
      {"stateful-ordering", stateful_ordering},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.verdict == Verdict::kPass ? "PASS" : o.verdict == Verdict::kFail ? "FAIL"
                                                                                          : "SKIP";
    if (o.verdict == Verdict::kFail) ++failures;
    std::cout << tag << " " << c.name << ": " << o.detail << std::endl;
  }
  return failures ? 1 : 0;
}
