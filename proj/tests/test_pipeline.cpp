#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "minipipe/error.hpp"
#include "minipipe/oracle.hpp"
#include "minipipe/pipeline_spec.hpp"
#include "minipipe/slot.hpp"
#include "test_util.hpp"

namespace minipipe {
namespace {

using testing::run_local;
using testing::toy_batch;

TEST(CompileSpec, PresetPI) {
  const PipelineSpec p = compile_spec("P-I");
  EXPECT_FALSE(p.stateful);
  EXPECT_EQ(p.dense_chain,
            (std::vector<OperatorKind>{OperatorKind::kNeg2Zero, OperatorKind::kLogarithm}));
  EXPECT_EQ(p.sparse_chain,
            (std::vector<OperatorKind>{OperatorKind::kHex2Int, OperatorKind::kModulus}));
  EXPECT_EQ(p.output_kind(), SparseKind::kValue64);
}

TEST(CompileSpec, PresetsPIIandPIII) {
  const PipelineSpec p2 = compile_spec("P-II");
  const PipelineSpec p3 = compile_spec("P-III");
  EXPECT_TRUE(p2.stateful);
  EXPECT_TRUE(p3.stateful);
  EXPECT_EQ(p2.params.modulus, 8192u);
  EXPECT_EQ(p3.params.modulus, 524288u);
  const std::vector<OperatorKind> stateful_chain{OperatorKind::kHex2Int, OperatorKind::kModulus,
                                                 OperatorKind::kVocabGen, OperatorKind::kVocabMap};
  EXPECT_EQ(p3.sparse_chain, stateful_chain);
  EXPECT_EQ(p3.output_kind(), SparseKind::kIndex32);
}

TEST(CompileSpec, KeyValueDescription) {
  const PipelineSpec s = compile_spec(
      "# custom\n"
      "id = mine\n"
      "dense = neg2zero\n"
      "sparse = hex2int, modulus, vocab_gen, vocab_map\n"
      "modulus = 64\n"
      "token_width = 4\n");
  EXPECT_EQ(s.id, "mine");
  EXPECT_TRUE(s.stateful);
  EXPECT_EQ(s.params.modulus, 64u);
  EXPECT_EQ(s.params.token_width, 4u);
  EXPECT_EQ(compile_spec(s.to_text()), s);
  for (const auto& name : preset_names()) EXPECT_EQ(compile_spec(preset(name)->to_text()), *preset(name));
}

TEST(CompileSpec, PresetBaseWithOverride) {
  const PipelineSpec s = compile_spec("preset = P-II\nmodulus = 1024\n");
  EXPECT_TRUE(s.stateful);
  EXPECT_EQ(s.params.modulus, 1024u);
}

TEST(CompileSpec, Errors) {
  EXPECT_THROW(compile_spec("sparse = hex2int, modulus, vocab_map, vocab_gen\nmodulus = 8"),
               SpecError);
  EXPECT_THROW(compile_spec("sparse = hex2int, modulus, vocab_map\nmodulus = 8"), SpecError);
  EXPECT_THROW(compile_spec("sparse = hex2int, modulus, vocab_gen, vocab_map"), SpecError);
  EXPECT_THROW(compile_spec("sparse = modulus\nmodulus = 8"), SpecError);
  EXPECT_THROW(compile_spec("dense = sqrt"), SpecError);
  EXPECT_THROW(compile_spec("dense = hex2int"), SpecError);
  EXPECT_THROW(compile_spec("no equals sign here"), SpecError);
  try {
    compile_spec("P-9");
    FAIL();
  } catch (const SpecError& e) {
    const std::string what = e.what();
    for (const auto& n : preset_names()) EXPECT_NE(what.find(n), std::string::npos);
  }
  PipelineSpec inconsistent = *preset("P-I");
  inconsistent.stateful = true;
  EXPECT_THROW(inconsistent.validate(), SpecError);
}

TEST(RunStateless, DIBatchMatchesPerElementOperators) {
  const ColumnBatch in = generate_synthetic(DatasetSpec::d1(3000, 21));
  const ColumnBatch out = run_local(*preset("P-I"), in);
  ASSERT_EQ(out.sparse_kind, SparseKind::kValue64);
  ASSERT_EQ(out.dense.size(), 13u);
  ASSERT_EQ(out.values.size(), 26u);
  for (std::size_t c = 0; c < 13; ++c) {
    for (std::uint64_t r = 0; r < in.row_count; ++r) {
      const float expect = logarithm(neg2zero(in.dense[c].values[r]));
      ASSERT_EQ(std::bit_cast<std::uint32_t>(out.dense[c].values[r]),
                std::bit_cast<std::uint32_t>(expect));
    }
  }
  for (std::size_t s = 0; s < 26; ++s) {
    for (std::uint64_t r = 0; r < in.row_count; ++r) {
      ASSERT_EQ(out.values[s].values[r], hex2int(in.sparse[s].token(r, 8)) % 8192);
    }
  }
}

TEST(RunStateless, EmptyStream) {
  ColumnBatch empty;
  empty.dense.push_back({"d", {}});
  empty.sparse.push_back({"s", {}});
  const ColumnBatch out = run_local(*preset("P-I"), empty);
  EXPECT_EQ(out.row_count, 0u);
  EXPECT_EQ(out.dense.size(), 1u);
  EXPECT_TRUE(out.dense[0].values.empty());
}

TEST(RunStateless, NaNBecomesZero) {
  const ColumnBatch in =
      toy_batch({1, 2, 3}, {1.0f, std::numeric_limits<float>::quiet_NaN(), 2.0f});
  const ColumnBatch out = run_local(*preset("P-I"), in);
  EXPECT_EQ(out.dense[0].values[1], 0.0f);
  EXPECT_FALSE(std::signbit(out.dense[0].values[1]));
}

TEST(RunStateless, OperatorErrorCarriesRowAndColumn) {
  ColumnBatch in = generate_synthetic(DatasetSpec::d1(20'000, 4));
  in.sparse[3].tokens[8 * 12'345 + 2] = 'q';  // column 13 + 3 = 16
  try {
    run_local(*preset("P-I"), in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 12'345u);
    EXPECT_EQ(e.column(), 16u);
    EXPECT_EQ(e.position(), 2u);
  }
  // Logarithm without neg2zero fails on the first negative dense value.
  const PipelineSpec log_only = compile_spec("dense = logarithm\nsparse = hex2int\n");
  ColumnBatch neg = toy_batch({1, 2, 3}, {1.0f, 2.0f, -3.0f});
  try {
    run_local(log_only, neg);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_EQ(e.column(), 0u);
  }
}

TEST(RunStateless, SinkAbortedOnError) {
  ColumnBatch in = toy_batch({1, 2, 3});
  in.sparse[0].tokens[0] = 'x';
  MiniPipeSlot slot(0, *preset("P-I"));
  BatchSource source(std::make_shared<const ColumnBatch>(in));
  BatchSink sink;
  EXPECT_THROW(run_stateless(slot, source, sink), ParseError);
  EXPECT_TRUE(sink.abort_reason().has_value());
  EXPECT_FALSE(sink.ended());
  EXPECT_EQ(slot.status(), SlotStatus::kIdle);
}

TEST(RunStateless, RejectsStatefulSpec) {
  MiniPipeSlot slot(0, *preset("P-II"));
  BatchSource source(std::make_shared<const ColumnBatch>(toy_batch({1})));
  BatchSink sink;
  EXPECT_THROW(run_stateless(slot, source, sink), CapabilityError);
}

TEST(RunStateful, ToyBatchIndices) {
  PipelineSpec spec = *preset("P-II");
  spec.params.modulus = 8;
  const ColumnBatch out = run_local(spec, toy_batch({5, 3, 5, 7}));
  ASSERT_EQ(out.sparse_kind, SparseKind::kIndex32);
  EXPECT_EQ(out.indices[0].indices, (std::vector<std::uint32_t>{0, 1, 0, 2}));
}

TEST(RunStateful, DeterministicOutputsAndTables) {
  const ColumnBatch in = generate_synthetic(DatasetSpec::d1(5000, 8));
  MiniPipeSlot a(0, *preset("P-III"));
  MiniPipeSlot b(1, *preset("P-III"));
  BatchSink sa, sb;
  BatchSource src(std::make_shared<const ColumnBatch>(in));
  run_stateful(a, src, sa);
  src.rewind();
  run_stateful(b, src, sb);
  EXPECT_EQ(sa.batch(), sb.batch());
  EXPECT_EQ(a.tables(), b.tables());
  ASSERT_EQ(a.tables().size(), 26u);
  for (const auto& t : a.tables()) {
    EXPECT_TRUE(t.frozen());
    EXPECT_LE(t.size(), 524288u);
  }
}

TEST(RunStateful, MatchesOracle) {
  const ColumnBatch in = generate_synthetic(DatasetSpec::d1(100'000, 9));
  for (const char* name : {"P-II", "P-III"}) {
    const OracleResult o = oracle_run(in, *preset(name));
    const ColumnBatch engine = run_local(*preset(name), in);
    EXPECT_EQ(engine, o.to_batch(in.row_count, in.token_width)) << name;
  }
}

TEST(RunStateful, NonReplayableSourceIsCapabilityError) {
  MiniPipeSlot slot(0, *preset("P-II"));
  OneShotSource once(std::make_unique<BatchSource>(
      std::make_shared<const ColumnBatch>(toy_batch({1, 2}))));
  BatchSink sink;
  EXPECT_THROW(run_stateful(slot, once, sink), CapabilityError);
  EXPECT_TRUE(sink.abort_reason().has_value());
}

TEST(RunSlot, SpoolsNonReplayableSourceAndCleansUp) {
  testing::TempDir dir;
  const ColumnBatch in = generate_synthetic(DatasetSpec::d1(2000, 10));
  MiniPipeSlot slot(0, *preset("P-II"));
  OneShotSource once(std::make_unique<BatchSource>(std::make_shared<const ColumnBatch>(in)));
  BatchSink sink;
  const RunStats stats = run_slot(slot, once, sink, {}, dir.path());
  EXPECT_TRUE(stats.spooled);
  EXPECT_EQ(dir.entries(), 0u);
  EXPECT_EQ(sink.batch(), oracle_run(in, *preset("P-II")).to_batch(in.row_count, 8));
}

TEST(MiniPipeSlot, StatusHistoryFollowsLifecycle) {
  MiniPipeSlot slot(3, *preset("P-I"));
  BatchSource source(std::make_shared<const ColumnBatch>(toy_batch({1, 2})));
  BatchSink sink;
  run_slot(slot, source, sink, {}, default_spool_dir());
  EXPECT_EQ(slot.history(), (std::vector<SlotStatus>{SlotStatus::kIdle, SlotStatus::kRunning,
                                                     SlotStatus::kQuiescing, SlotStatus::kIdle}));
  EXPECT_THROW(slot.transition(SlotStatus::kQuiescing), SchedulingError);
  EXPECT_THROW(MiniPipeSlot(300, *preset("P-I")), ParamError);
}

TEST(MiniPipeSlot, InstallDropsState) {
  MiniPipeSlot slot(0, *preset("P-II"));
  BatchSource source(std::make_shared<const ColumnBatch>(toy_batch({1, 2})));
  BatchSink sink;
  run_slot(slot, source, sink, {}, default_spool_dir());
  EXPECT_EQ(slot.tables().size(), 1u);
  slot.install(*preset("P-III"));
  EXPECT_TRUE(slot.tables().empty());
  EXPECT_EQ(slot.spec().id, "P-III");
  PipelineSpec bad = *preset("P-I");
  bad.sparse_chain = {OperatorKind::kModulus};
  EXPECT_THROW(slot.install(bad), SpecError);
  EXPECT_EQ(slot.spec().id, "P-III");
}

TEST(RunSlot, PreemptedByStopToken) {
  const ColumnBatch in = generate_synthetic(DatasetSpec::d1(50'000, 2));
  MiniPipeSlot slot(0, *preset("P-I"));
  BatchSource source(std::make_shared<const ColumnBatch>(in));
  BatchSink sink;
  std::stop_source stop;
  stop.request_stop();
  RunOptions options;
  options.stop = stop.get_token();
  EXPECT_THROW(run_slot(slot, source, sink, options, default_spool_dir()), PreemptedError);
  EXPECT_TRUE(sink.abort_reason().has_value());
  EXPECT_EQ(slot.status(), SlotStatus::kIdle);
}

TEST(RunSlot, OrderPreservedAcrossColumnThreads) {
  const ColumnBatch in = generate_synthetic(DatasetSpec::d1(30'000, 12));
  for (const char* name : {"P-I", "P-II", "P-III"}) {
    EXPECT_EQ(run_local(*preset(name), in, 1), run_local(*preset(name), in, 4)) << name;
  }
}

TEST(RunSlot, OutOfVocabularyBucketNeverNeededInTwoPassMode) {
  // Two passes over one source see the same values, so the bucket stays unused.
  const ColumnBatch in = generate_synthetic(DatasetSpec::d1(5000, 13));
  MiniPipeSlot slot(0, *preset("P-II"));
  BatchSource source(std::make_shared<const ColumnBatch>(in));
  BatchSink sink;
  RunOptions options;
  options.out_of_vocabulary_bucket = true;
  run_slot(slot, source, sink, options, default_spool_dir());
  for (std::size_t s = 0; s < sink.batch().indices.size(); ++s) {
    for (auto i : sink.batch().indices[s].indices) ASSERT_LT(i, slot.tables()[s].size());
  }
}

}  // namespace
}  // namespace minipipe
