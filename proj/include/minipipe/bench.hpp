#pragma once
// Benchmark harness: multi-slot pipeline scaling and per-operator timing.
// Reports go to a JSON-lines file and a plain text table.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "minipipe/colfmt.hpp"
#include "minipipe/pipeline_spec.hpp"

namespace minipipe {

struct BenchReport {
  std::string label;
  std::string kind;  // "pipeline" or "operator"
  std::size_t slots = 1;
  std::size_t trials = 0;
  unsigned host_cores = 0;
  std::uint64_t rows = 0;       // per job
  std::uint64_t bytes = 0;      // input payload bytes per trial, all jobs
  std::vector<double> seconds;  // wall time per trial
  double mean_seconds = 0.0;
  double stddev_seconds = 0.0;
  double bytes_per_second = 0.0;  // from mean_seconds
  double rows_per_second = 0.0;   // all jobs
  /// Mean bytes/second of each slot's own job.
  std::vector<double> per_slot_bytes_per_second;

  bool operator==(const BenchReport&) const = default;
};

struct BenchOptions {
  std::size_t trials = 5;
  std::size_t warmups = 1;
  int column_threads = 1;
};

/// For each slot count k, runs k identical jobs of `spec` over `dataset`
/// concurrently on k slots. Warm-up runs are excluded. Throws ParamError
/// for trials < 5 or a slot count of 0.
std::vector<BenchReport> bench_pipeline(const PipelineSpec& spec, const DatasetSpec& dataset,
                                        const std::vector<std::size_t>& slot_counts,
                                        const BenchOptions& options = {});

/// One row per operator: Neg2Zero, Logarithm, Hex2Int, Modulus,
/// VocabGen-8K, VocabMap-8K, VocabGen-512K, VocabMap-512K.
std::vector<BenchReport> bench_operators(const DatasetSpec& dataset,
                                         const BenchOptions& options = {});

void write_reports(std::ostream& out, const std::vector<BenchReport>& reports);
std::vector<BenchReport> read_reports(std::istream& in);
void print_table(std::ostream& out, const std::vector<BenchReport>& reports);

}  // namespace minipipe
