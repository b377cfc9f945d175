#include "minipipe/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <memory>
#include <thread>

#include "minipipe/engine.hpp"
#include "minipipe/error.hpp"
#include "minipipe/kernels.hpp"

namespace minipipe {

namespace {

using Clock = std::chrono::steady_clock;

void finish_report(BenchReport& r) {
  const ThroughputStats s = summarize(r.seconds);
  r.trials = r.seconds.size();
  r.mean_seconds = s.mean;
  r.stddev_seconds = s.stddev;
  if (r.mean_seconds > 0) {
    r.bytes_per_second = static_cast<double>(r.bytes) / r.mean_seconds;
    r.rows_per_second = static_cast<double>(r.rows * r.slots) / r.mean_seconds;
  }
}

void check_options(const BenchOptions& options) {
  if (options.trials < 5) throw ParamError("benchmarks need at least 5 trials");
}

/// Times `body` over warm-ups plus trials; returns trial wall times.
std::vector<double> time_trials(const BenchOptions& options, const std::function<void()>& setup,
                                const std::function<void()>& body) {
  std::vector<double> out;
  for (std::size_t i = 0; i < options.warmups + options.trials; ++i) {
    if (setup) setup();
    const auto t0 = Clock::now();
    body();
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    if (i >= options.warmups) out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<BenchReport> bench_pipeline(const PipelineSpec& spec, const DatasetSpec& dataset,
                                        const std::vector<std::size_t>& slot_counts,
                                        const BenchOptions& options) {
  check_options(options);
  spec.validate();
  dataset.validate();
  if (slot_counts.empty()) throw ParamError("no slot counts given");
  std::size_t max_slots = 0;
  for (auto k : slot_counts) {
    if (k == 0) throw ParamError("slot counts must be >= 1");
    max_slots = std::max(max_slots, k);
  }

  // Materialized once so data generation stays out of the timed region.
  const auto batch = std::make_shared<const ColumnBatch>(generate_synthetic(dataset));
  const std::uint64_t job_bytes = batch->header().payload_bytes();

  EngineConfig config;
  config.slot_count = std::max<std::size_t>(max_slots, 1);
  config.column_threads = options.column_threads;
  Engine engine(config, spec);

  std::vector<BenchReport> reports;
  for (std::size_t k : slot_counts) {
    BenchReport r;
    r.label = spec.id + " x" + std::to_string(k);
    r.kind = "pipeline";
    r.slots = k;
    r.host_cores = std::thread::hardware_concurrency();
    r.rows = dataset.rows;
    r.bytes = job_bytes * k;
    std::vector<double> per_slot_sum(k, 0.0);
    for (std::size_t i = 0; i < options.warmups + options.trials; ++i) {
      std::vector<std::unique_ptr<BatchSource>> sources;
      std::vector<CountingSink> sinks(k);
      std::vector<ConcurrentJob> jobs;
      for (std::size_t s = 0; s < k; ++s) {
        sources.push_back(std::make_unique<BatchSource>(batch, static_cast<std::uint8_t>(s)));
        jobs.push_back({s, sources.back().get(), &sinks[s]});
      }
      const ConcurrentReport cr = engine.run_concurrent(jobs);
      for (const auto& j : cr.jobs) {
        if (j.error) std::rethrow_exception(j.error);
      }
      if (i < options.warmups) continue;
      r.seconds.push_back(cr.seconds);
      for (std::size_t s = 0; s < k; ++s) per_slot_sum[s] += cr.jobs[s].bytes_per_second;
    }
    for (double v : per_slot_sum) {
      r.per_slot_bytes_per_second.push_back(v / static_cast<double>(options.trials));
    }
    finish_report(r);
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<BenchReport> bench_operators(const DatasetSpec& dataset, const BenchOptions& options) {
  check_options(options);
  dataset.validate();
  const ColumnBatch batch = generate_synthetic(dataset);
  const unsigned width = batch.token_width;
  const int threads = options.column_threads;

  std::vector<std::vector<float>> dense(batch.dense.size());
  std::vector<std::vector<float>> clipped(batch.dense.size());
  for (std::size_t c = 0; c < batch.dense.size(); ++c) {
    clipped[c] = batch.dense[c].values;
    const OperatorKind n2z = OperatorKind::kNeg2Zero;
    kernels::dense_chain({&n2z, 1}, clipped[c], 0, threads);
  }
  std::vector<std::vector<std::uint64_t>> parsed(batch.sparse.size());
  for (std::size_t s = 0; s < batch.sparse.size(); ++s) {
    parsed[s].resize(batch.row_count);
    kernels::parse_hex(batch.sparse[s].tokens, width, parsed[s], 0, threads);
  }
  std::vector<std::vector<std::uint64_t>> work(batch.sparse.size());
  std::vector<std::vector<std::uint32_t>> mapped(batch.sparse.size());
  std::vector<VocabTable> tables;

  const std::uint64_t dense_bytes = batch.row_count * batch.dense.size() * sizeof(float);
  const std::uint64_t token_bytes = batch.row_count * batch.sparse.size() * width;
  const std::uint64_t value_bytes = batch.row_count * batch.sparse.size() * sizeof(std::uint64_t);

  auto dense_body = [&](OperatorKind op) {
    return [&, op] {
      for (auto& col : dense) kernels::dense_chain({&op, 1}, col, 0, threads);
    };
  };
  auto reduce = [&](std::uint64_t m) {
    for (std::size_t s = 0; s < parsed.size(); ++s) {
      work[s] = parsed[s];
      kernels::modulus(work[s], m, threads);
    }
  };
  auto gen = [&](std::uint64_t m) {
    tables.clear();
    for (std::size_t s = 0; s < work.size(); ++s) {
      tables.emplace_back(m);
      kernels::vocab_gen(tables.back(), work[s], 0);
    }
  };

  struct Row {
    std::string label;
    std::uint64_t bytes;
    std::function<void()> setup;
    std::function<void()> body;
  };
  std::vector<Row> rows;
  // Neg2Zero sees the raw values; Logarithm sees them already clipped.
  rows.push_back({"Neg2Zero", dense_bytes,
                  [&] {
                    for (std::size_t c = 0; c < dense.size(); ++c) dense[c] = batch.dense[c].values;
                  },
                  dense_body(OperatorKind::kNeg2Zero)});
  rows.push_back({"Logarithm", dense_bytes, [&] { dense = clipped; },
                  dense_body(OperatorKind::kLogarithm)});
  rows.push_back({"Hex2Int", token_bytes, nullptr, [&] {
                    for (std::size_t s = 0; s < parsed.size(); ++s) {
                      kernels::parse_hex(batch.sparse[s].tokens, width, parsed[s], 0, threads);
                    }
                  }});
  rows.push_back({"Modulus", value_bytes,
                  [&] {
                    for (std::size_t s = 0; s < parsed.size(); ++s) work[s] = parsed[s];
                  },
                  [&] {
                    for (auto& w : work) kernels::modulus(w, kSmallVocab, threads);
                  }});
  for (std::uint64_t m : {kSmallVocab, kLargeVocab}) {
    const std::string suffix = m == kSmallVocab ? "-8K" : "-512K";
    rows.push_back({"VocabGen" + suffix, value_bytes, [&, m] { reduce(m); }, [&, m] { gen(m); }});
    rows.push_back({"VocabMap" + suffix, value_bytes,
                    [&, m] {
                      reduce(m);
                      gen(m);
                      for (auto& t : tables) t.freeze();
                      for (std::size_t s = 0; s < work.size(); ++s) {
                        mapped[s].resize(work[s].size());
                      }
                    },
                    [&] {
                      for (std::size_t s = 0; s < work.size(); ++s) {
                        kernels::vocab_map(tables[s], work[s], mapped[s], 0, {}, threads);
                      }
                    }});
  }

  std::vector<BenchReport> reports;
  for (auto& row : rows) {
    BenchReport r;
    r.label = row.label;
    r.kind = "operator";
    r.slots = 1;
    r.host_cores = std::thread::hardware_concurrency();
    r.rows = batch.row_count;
    r.bytes = row.bytes;
    r.seconds = time_trials(options, row.setup, row.body);
    finish_report(r);
    r.per_slot_bytes_per_second = {r.bytes_per_second};
    reports.push_back(std::move(r));
  }
  return reports;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json to_json(const BenchReport& r) {
  return {{"label", r.label},
          {"kind", r.kind},
          {"slots", r.slots},
          {"trials", r.trials},
          {"host_cores", r.host_cores},
          {"rows", r.rows},
          {"bytes", r.bytes},
          {"seconds", r.seconds},
          {"mean_seconds", r.mean_seconds},
          {"stddev_seconds", r.stddev_seconds},
          {"bytes_per_second", r.bytes_per_second},
          {"rows_per_second", r.rows_per_second},
          {"per_slot_bytes_per_second", r.per_slot_bytes_per_second}};
}

BenchReport from_json(const nlohmann::json& j) {
  BenchReport r;
  j.at("label").get_to(r.label);
  j.at("kind").get_to(r.kind);
  j.at("slots").get_to(r.slots);
  j.at("trials").get_to(r.trials);
  j.at("host_cores").get_to(r.host_cores);
  j.at("rows").get_to(r.rows);
  j.at("bytes").get_to(r.bytes);
  j.at("seconds").get_to(r.seconds);
  j.at("mean_seconds").get_to(r.mean_seconds);
  j.at("stddev_seconds").get_to(r.stddev_seconds);
  j.at("bytes_per_second").get_to(r.bytes_per_second);
  j.at("rows_per_second").get_to(r.rows_per_second);
  j.at("per_slot_bytes_per_second").get_to(r.per_slot_bytes_per_second);
  return r;
}

}  // namespace

void write_reports(std::ostream& out, const std::vector<BenchReport>& reports) {
  for (const auto& r : reports) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("failed writing bench report", 0);
}

std::vector<BenchReport> read_reports(std::istream& in) {
  std::vector<BenchReport> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bench report line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void print_table(std::ostream& out, const std::vector<BenchReport>& reports) {
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %5s %6s %12s %10s %10s %12s %14s\n", "config", "slots",
                "trials", "rows/job", "mean s", "stddev s", "MB/s", "Mrows/s");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-16s %5zu %6zu %12llu %10.4f %10.4f %12.1f %14.2f\n",
                  r.label.c_str(), r.slots, r.trials, static_cast<unsigned long long>(r.rows),
                  r.mean_seconds, r.stddev_seconds, r.bytes_per_second / 1e6,
                  r.rows_per_second / 1e6);
    out << line;
  }
}

}  // namespace minipipe
