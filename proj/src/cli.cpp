#include "minipipe/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "minipipe/bench.hpp"
#include "minipipe/engine.hpp"
#include "minipipe/error.hpp"
#include "minipipe/service.hpp"

namespace minipipe {

namespace {

/// Usage problems found after parsing (bad preset, missing input file).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct DatasetFlags {
  std::string shape;
  std::uint64_t rows = 1000;
  std::size_t dense = 13;
  std::size_t sparse = 26;
  std::uint64_t seed = 0;
  double negative_fraction = 0.1;
  double nan_fraction = 0.02;
  std::uint64_t cardinality = 1'000'000;
  unsigned token_width = kDefaultTokenWidth;

  void add_to(CLI::App& app) {
    app.add_option("--shape", shape, "Dataset shape preset: d1 (13+26) or d2 (504+42)")
        ->check(CLI::IsMember({"d1", "d2"}));
    app.add_option("--rows", rows, "Row count")->capture_default_str();
    app.add_option("--dense", dense, "Dense feature columns")->capture_default_str();
    app.add_option("--sparse", sparse, "Sparse feature columns")->capture_default_str();
    app.add_option("--seed", seed, "Generator seed")->capture_default_str();
    app.add_option("--negative-fraction", negative_fraction)->capture_default_str();
    app.add_option("--nan-fraction", nan_fraction)->capture_default_str();
    app.add_option("--cardinality", cardinality, "Distinct tokens per sparse column")
        ->capture_default_str();
    app.add_option("--token-width", token_width, "Hex token width W")->capture_default_str();
  }

  DatasetSpec spec() const {
    DatasetSpec d;
    if (shape == "d1") d = DatasetSpec::d1(rows, seed);
    if (shape == "d2") d = DatasetSpec::d2(rows, seed);
    d.rows = rows;
    d.seed = seed;
    if (shape.empty()) {
      d.dense_features = dense;
      d.sparse_features = sparse;
    }
    d.negative_fraction = negative_fraction;
    d.nan_fraction = nan_fraction;
    d.sparse_cardinality = cardinality;
    d.token_width = token_width;
    return d;
  }
};

/// A preset name, or a path to a key = value description file.
PipelineSpec resolve_pipeline(const std::string& text) {
  std::error_code ec;
  if (!preset(text) && std::filesystem::is_regular_file(text, ec)) {
    std::ifstream in(text);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      return compile_spec(ss.str());
    } catch (const SpecError& e) {
      throw UsageError("pipeline file '" + text + "': " + e.what());
    }
  }
  try {
    return compile_spec(text);
  } catch (const SpecError& e) {
    throw UsageError(e.what());
  }
}

int cmd_gen(const DatasetFlags& flags, const std::string& output, std::ostream& out) {
  const DatasetSpec d = flags.spec();
  try {
    d.validate();
  } catch (const ParamError& e) {
    throw UsageError(e.what());
  }
  // Streamed column by column so large datasets never sit in memory.
  SyntheticSource source(d);
  FileSink sink(output);
  pump(source, sink);
  out << "wrote " << output << ": " << d.rows << " rows, " << d.dense_features << " dense, "
      << d.sparse_features << " sparse, " << sink.bytes_written() << " bytes\n";
  return kExitOk;
}

int cmd_run(const std::string& pipeline, const std::string& input, const std::string& output,
            int threads, bool oov, std::ostream& out) {
  PipelineSpec spec = resolve_pipeline(pipeline);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(input, ec)) {
    throw UsageError("input file '" + input + "' does not exist");
  }
  const auto parent = std::filesystem::path(output).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent, ec)) {
    throw UsageError("output directory '" + parent.string() + "' does not exist");
  }

  EngineConfig config;
  config.slot_count = 1;
  config.column_threads = threads;
  Engine engine(config, spec);
  auto source = ColumnFileSource::open_file(input);
  FileSink sink(output);
  JobOptions options;
  options.out_of_vocabulary_bucket = oov;
  const JobResult result = engine.submit(0, *source, sink, options).get();
  result.rethrow();
  out << spec.id << ": " << result.stats.rows << " rows, " << result.stats.output_bytes
      << " output bytes in " << result.stats.seconds << " s -> " << output << "\n";
  return kExitOk;
}

int cmd_serve(const std::string& bind, std::size_t slots, std::size_t queue_depth,
              const std::string& spool_dir, double duration, std::ostream& out) {
  net::Endpoint endpoint;
  try {
    endpoint = net::Endpoint::parse(bind);
  } catch (const ParamError& e) {
    throw UsageError(e.what());
  }
  EngineConfig config;
  config.slot_count = slots;
  config.queue_depth = queue_depth;
  config.spool_dir = spool_dir;
  try {
    config.validate();
  } catch (const ParamError& e) {
    throw UsageError(e.what());
  }

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto server = serve(endpoint, config);
  out << "serving on " << server->endpoint().to_string() << " with " << slots << " slots"
      << std::endl;
  if (duration > 0) {
    timespec ts{};
    ts.tv_sec = static_cast<time_t>(duration);
    ts.tv_nsec = static_cast<long>((duration - static_cast<double>(ts.tv_sec)) * 1e9);
    sigtimedwait(&signals, nullptr, &ts);
  } else {
    int sig = 0;
    sigwait(&signals, &sig);
  }
  server->stop(false);
  out << "stopped after " << server->sessions_started() << " sessions" << std::endl;
  return kExitOk;
}

int cmd_bench(const std::string& pipeline, const DatasetFlags& flags,
              const std::vector<std::size_t>& slots, std::size_t trials, std::size_t warmups,
              bool operators, const std::string& output, std::ostream& out) {
  const PipelineSpec spec = resolve_pipeline(pipeline);
  const DatasetSpec d = flags.spec();
  BenchOptions options;
  options.trials = trials;
  options.warmups = warmups;
  try {
    d.validate();
    if (trials < 5) throw ParamError("--trials must be >= 5");
  } catch (const ParamError& e) {
    throw UsageError(e.what());
  }
  std::vector<BenchReport> reports = bench_pipeline(spec, d, slots, options);
  if (operators) {
    auto ops = bench_operators(d, options);
    reports.insert(reports.end(), ops.begin(), ops.end());
  }
  print_table(out, reports);
  if (!output.empty()) {
    std::ofstream file(output);
    if (!file) throw IoError("cannot open '" + output + "'", 0);
    write_reports(file, reports);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"minipipe: streaming columnar preprocessing for recommender features", "minipipe"};
  app.require_subcommand(1);

  DatasetFlags gen_flags;
  std::string gen_output;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic column file");
  gen_flags.add_to(*gen);
  gen->add_option("-o,--output", gen_output, "Output column file")->required();

  std::string run_pipeline, run_input, run_output;
  int run_threads = 1;
  bool run_oov = false;
  auto* run = app.add_subcommand("run", "Run a pipeline over a column file");
  run->add_option("-p,--pipeline", run_pipeline, "Preset (P-I, P-II, P-III) or description file")
      ->required();
  run->add_option("-i,--input", run_input, "Input column file")->required();
  run->add_option("-o,--output", run_output, "Output column file")->required();
  run->add_option("--threads", run_threads, "Column threads inside the slot")
      ->check(CLI::PositiveNumber);
  run->add_flag("--oov-bucket", run_oov, "Map unseen values to the out-of-vocabulary index");

  std::string serve_bind = "127.0.0.1:7878", serve_spool;
  std::size_t serve_slots = 7, serve_depth = 16;
  double serve_duration = 0;
  auto* srv = app.add_subcommand("serve", "Serve pipelines over the frame protocol");
  srv->add_option("--bind", serve_bind, "host:port")->capture_default_str();
  srv->add_option("--slots", serve_slots, "Slot count")->capture_default_str();
  srv->add_option("--queue-depth", serve_depth, "Frames in flight per slot")
      ->capture_default_str();
  srv->add_option("--spool-dir", serve_spool, "Spool directory (default $MINIPIPE_SPOOL_DIR)");
  srv->add_option("--duration", serve_duration, "Stop after this many seconds (0 = on signal)");

  std::string bench_pipeline_name = "P-I", bench_output;
  DatasetFlags bench_flags;
  bench_flags.shape = "d1";
  bench_flags.rows = 1'000'000;
  std::vector<std::size_t> bench_slots{1, 2, 4};
  std::size_t bench_trials = 5, bench_warmups = 1;
  bool bench_ops = false;
  auto* bench = app.add_subcommand("bench", "Measure pipeline scaling and operator cost");
  bench->add_option("-p,--pipeline", bench_pipeline_name)->capture_default_str();
  bench_flags.add_to(*bench);
  bench->add_option("--slots", bench_slots, "Slot counts, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--trials", bench_trials)->capture_default_str();
  bench->add_option("--warmups", bench_warmups)->capture_default_str();
  bench->add_flag("--operators", bench_ops, "Also time each operator alone");
  bench->add_option("-o,--output", bench_output, "JSON-lines report file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_flags, gen_output, out);
    if (*run) return cmd_run(run_pipeline, run_input, run_output, run_threads, run_oov, out);
    if (*srv) {
      return cmd_serve(serve_bind, serve_slots, serve_depth, serve_spool, serve_duration, out);
    }
    if (*bench) {
      return cmd_bench(bench_pipeline_name, bench_flags, bench_slots, bench_trials, bench_warmups,
                       bench_ops, bench_output, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace minipipe
