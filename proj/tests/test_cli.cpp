#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "minipipe/bench.hpp"
#include "minipipe/cli.hpp"
#include "minipipe/oracle.hpp"
#include "minipipe/service.hpp"
#include "test_util.hpp"

namespace minipipe {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, GenThenRun) {
  testing::TempDir dir;
  const auto in = (dir / "in.col").string();
  const auto out = (dir / "out.col").string();
  auto g = cli({"gen", "--shape", "d1", "--rows", "3000", "--seed", "9", "-o", in});
  ASSERT_EQ(g.code, kExitOk) << g.err;
  EXPECT_EQ(read_column_file(in), generate_synthetic(DatasetSpec::d1(3000, 9)));
  auto r = cli({"run", "-p", "P-I", "-i", in, "-o", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("3000 rows"), std::string::npos) << r.out;
  EXPECT_EQ(read_column_file(out),
            testing::run_local(*preset("P-I"), read_column_file(in)));
}

TEST(Cli, RunStatefulMatchesOracle) {
  testing::TempDir dir;
  const auto in = (dir / "in.col").string();
  const auto out = (dir / "out.col").string();
  ASSERT_EQ(cli({"gen", "--shape", "d1", "--rows", "5000", "--seed", "3", "-o", in}).code,
            kExitOk);
  auto r = cli({"run", "-p", "P-II", "-i", in, "-o", out, "--threads", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const ColumnBatch input = read_column_file(in);
  EXPECT_EQ(read_column_file(out),
            oracle_run(input, *preset("P-II")).to_batch(input.row_count, 8));
}

TEST(Cli, PipelineFromDescriptionFile) {
  testing::TempDir dir;
  const auto in = (dir / "in.col").string();
  const auto out = (dir / "out.col").string();
  const auto desc = (dir / "p.txt").string();
  std::ofstream(desc) << preset("P-III")->to_text();
  ASSERT_EQ(cli({"gen", "--rows", "500", "--dense", "2", "--sparse", "3", "-o", in}).code,
            kExitOk);
  auto r = cli({"run", "-p", desc, "-i", in, "-o", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(read_column_file(out), testing::run_local(*preset("P-III"), read_column_file(in)));
}

TEST(Cli, UnknownPresetIsUsageError) {
  testing::TempDir dir;
  auto r = cli({"run", "-p", "P-9", "-i", (dir / "x").string(), "-o", (dir / "y").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("P-I"), std::string::npos) << "valid presets not listed: " << r.err;
}

TEST(Cli, HelpAndMissingSubcommand) {
  auto h = cli({"--help"});
  EXPECT_EQ(h.code, kExitOk);
  EXPECT_NE(h.out.find("gen"), std::string::npos);
  auto sub = cli({"run", "--help"});
  EXPECT_EQ(sub.code, kExitOk);
  EXPECT_NE(sub.out.find("--pipeline"), std::string::npos);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
}

TEST(Cli, MissingInputIsUsageError) {
  testing::TempDir dir;
  auto r = cli({"run", "-p", "P-I", "-i", (dir / "nope.col").string(), "-o",
                (dir / "out.col").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("does not exist"), std::string::npos);
}

TEST(Cli, CorruptInputIsRuntimeError) {
  testing::TempDir dir;
  const auto in = (dir / "bad.col").string();
  std::ofstream(in) << "definitely not a column file, just some text padding it out";
  auto r = cli({"run", "-p", "P-I", "-i", in, "-o", (dir / "out.col").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, GenRejectsBadParameters) {
  testing::TempDir dir;
  EXPECT_EQ(cli({"gen", "--token-width", "0", "-o", (dir / "x").string()}).code, kExitUsage);
  EXPECT_EQ(cli({"gen", "--shape", "d9", "-o", (dir / "x").string()}).code, kExitUsage);
}

TEST(Cli, BenchWritesJsonReport) {
  testing::TempDir dir;
  const auto report = (dir / "r.jsonl").string();
  auto r = cli({"bench", "--rows", "2000", "--slots", "1,2", "--operators", "-o", report});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("P-I x2"), std::string::npos);
  std::ifstream in(report);
  EXPECT_EQ(read_reports(in).size(), 2u + 8u);
  EXPECT_EQ(cli({"bench", "--rows", "100", "--trials", "3"}).code, kExitUsage);
}

TEST(Cli, RemoteRoundTripEqualsRunOutput) {
  testing::TempDir dir;
  const auto in = (dir / "in.col").string();
  const auto out = (dir / "out.col").string();
  ASSERT_EQ(cli({"gen", "--shape", "d1", "--rows", "4000", "--seed", "5", "-o", in}).code,
            kExitOk);
  ASSERT_EQ(cli({"run", "-p", "P-I", "-i", in, "-o", out}).code, kExitOk);
  auto server = serve({"127.0.0.1", 0});
  EXPECT_EQ(preprocess_remote(server->endpoint(), "P-I", read_column_file(in)),
            read_column_file(out));
}

}  // namespace
}  // namespace minipipe
