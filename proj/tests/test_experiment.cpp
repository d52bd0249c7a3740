#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hsd/experiment.hpp"
#include "hsd/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace hsd;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json valid_doc() {
  return json::parse(R"({
    "name": "demo",
    "protocol": "few_shot",
    "pct": 10,
    "source": {"corpus": "en/corpus.tsv", "bundle": "en/splits.json", "features": "en/features.frzf"},
    "target": {"corpus": "es/corpus.tsv", "bundle": "es/splits.json", "features": "es/features.frzf"},
    "view": "final_layer",
    "block": {"variant": "max_pool"},
    "train": {"preset": "F", "max_epochs": 8, "patience": 3, "learning_rate": 0.01},
    "seed": 7,
    "output_dir": "out"
  })");
}

class ExperimentFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    source = write_synthetic(dir.path(), {.prefix = "en", .size = 150, .shift = 0.6, .seed = 11});
    target = write_synthetic(dir.path(), {.prefix = "es", .language = Language::es, .size = 150, .shift = 0.6,
                                          .lang_offset = 0.3, .seed = 12});
  }

  ExperimentSpec spec(Protocol p, double pct = 0) const {
    auto doc = valid_doc();
    doc["protocol"] = to_string(p);
    doc["pct"] = pct;
    if (p == Protocol::unilingual) doc.erase("target");
    return experiment_from_json(doc, dir.path());
  }

  TempDir dir;
  PartitionRef source, target;
};

}  // namespace

TEST(ExperimentSchema, ParsesAndResolvesRelativePaths) {
  const auto s = experiment_from_json(valid_doc(), "/data/exp");
  EXPECT_EQ(s.name, "demo");
  EXPECT_EQ(s.protocol, Protocol::few_shot);
  EXPECT_EQ(s.pct, 10);
  EXPECT_EQ(s.source.corpus, fs::path("/data/exp/en/corpus.tsv"));
  EXPECT_EQ(s.output_dir, fs::path("/data/exp/out"));
  EXPECT_EQ(s.train.batch_size, 64u);
  EXPECT_EQ(s.train.learning_rate, 0.01);
  EXPECT_EQ(s.train.max_epochs, 8u);
  EXPECT_EQ(s.block->variant, Variant::max_pool);
  EXPECT_EQ(s.seed, 7u);
}

TEST(ExperimentSchema, RoundTripsThroughJson) {
  const auto a = experiment_from_json(valid_doc(), "/data/exp");
  const auto b = experiment_from_json(to_json(a), "/elsewhere");
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(ExperimentSchema, RejectsUnknownKeysAtEveryLevel) {
  for (const char* pointer : {"", "/source", "/target", "/train", "/block"}) {
    auto doc = valid_doc();
    doc[json::json_pointer(pointer)]["surprise"] = 1;
    EXPECT_THROW(experiment_from_json(doc), ConfigError) << pointer;
  }
}

TEST(ExperimentSchema, RejectsInconsistentDocuments) {
  auto expect_bad = [](auto edit) {
    auto doc = valid_doc();
    edit(doc);
    EXPECT_THROW(experiment_from_json(doc), ConfigError) << doc.dump();
  };
  expect_bad([](json& d) { d["protocol"] = "transfer"; });
  expect_bad([](json& d) { d["pct"] = 150; });
  expect_bad([](json& d) { d["protocol"] = "unilingual"; });  // pct 10 given
  expect_bad([](json& d) { d["protocol"] = "few_shot_only"; d["pct"] = 0; });
  expect_bad([](json& d) { d.erase("target"); });
  expect_bad([](json& d) { d["view"] = "middle"; });
  expect_bad([](json& d) { d["baseline"] = {{"kind", "svm"}}; });
  expect_bad([](json& d) { d.erase("block"); });
  expect_bad([](json& d) { d["source"].erase("features"); });
  expect_bad([](json& d) { d["train"]["preset"] = "M"; });
  expect_bad([](json& d) { d["train"]["batch_size"] = 0; });
  expect_bad([](json& d) { d["seed"] = "seven"; });
  expect_bad([](json& d) { d.erase("output_dir"); });
  expect_bad([](json& d) {
    d.erase("block");
    d["baseline"] = {{"kind", "svm"}, {"C", -1}};
  });
}

TEST(ExperimentSchema, BaselineNeedsNoFeatures) {
  auto doc = valid_doc();
  doc.erase("block");
  doc["source"].erase("features");
  doc["target"].erase("features");
  doc["baseline"] = {{"kind", "svm"}};
  const auto s = experiment_from_json(doc);
  ASSERT_TRUE(s.baseline);
  EXPECT_DOUBLE_EQ(s.baseline->C, 3.5938);
}

TEST_F(ExperimentFixture, ZeroShotEqualsFewShotAtZeroPercent) {
  const auto zero = run_experiment(spec(Protocol::zero_shot));
  const auto few0 = run_experiment(spec(Protocol::few_shot, 0));
  EXPECT_EQ(zero.record, few0.record);
  EXPECT_EQ(zero.record["injected"], 0);
  EXPECT_EQ(zero.record["protocol"], "few_shot");
}

TEST_F(ExperimentFixture, RunsAreByteDeterministic) {
  const auto s = spec(Protocol::few_shot, 25);
  write_run(dir / "a", s, run_experiment(s));
  write_run(dir / "b", s, run_experiment(s));
  EXPECT_EQ(slurp(dir / "a" / "run.json"), slurp(dir / "b" / "run.json"));
  EXPECT_EQ(slurp(dir / "a" / "predictions.tsv"), slurp(dir / "b" / "predictions.tsv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "timing.json"));
  EXPECT_EQ(slurp(dir / "a" / "run.json").find("wall"), std::string::npos);
}

TEST_F(ExperimentFixture, ProtocolsWireTheRightSplits) {
  const auto target_bundle = load_split_bundle(target.bundle);
  const auto source_bundle = load_split_bundle(source.bundle);
  const std::size_t src_train = source_bundle[Split::train].size(), tgt_train = target_bundle[Split::train].size();

  const auto uni = run_experiment(spec(Protocol::unilingual)).record;
  EXPECT_EQ(uni["train_size"], src_train);
  EXPECT_EQ(uni["test_size"], source_bundle[Split::test].size());
  EXPECT_EQ(uni["val_size"], source_bundle[Split::val].size());

  for (double pct : {0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 100.0}) {
    const auto rec = run_experiment(spec(Protocol::few_shot, pct)).record;
    const auto injected = static_cast<std::size_t>(pct / 100.0 * static_cast<double>(tgt_train));
    EXPECT_EQ(rec["injected"], injected) << pct;
    EXPECT_EQ(rec["train_size"], src_train + injected) << pct;
    EXPECT_EQ(rec["test_size"], target_bundle[Split::test].size());
  }
  const auto only = run_experiment(spec(Protocol::few_shot_only, 50)).record;
  EXPECT_EQ(only["train_size"], tgt_train / 2);
}

TEST_F(ExperimentFixture, InjectedOnlyTrainingTrailsMixedTraining) {
  // Averaged over seeds: a handful of target samples alone should not beat
  // the same samples added to the full source set.
  double only = 0, mixed = 0;
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    auto a = spec(Protocol::few_shot_only, 5), b = spec(Protocol::few_shot, 5);
    a.seed = b.seed = seed;
    only += run_experiment(a).test.macro_f1;
    mixed += run_experiment(b).test.macro_f1;
  }
  EXPECT_LT(only, mixed);
}

TEST_F(ExperimentFixture, BaselineAndEmbeddingRuns) {
  auto doc = valid_doc();
  doc["protocol"] = "unilingual";
  doc.erase("pct");
  doc.erase("target");
  doc.erase("block");
  doc["baseline"] = {{"kind", "svm"}};
  const auto svm = run_experiment(experiment_from_json(doc, dir.path()));
  EXPECT_GT(svm.test.accuracy, 0.9);
  EXPECT_EQ(svm.record["model"]["baseline"], "svm");

  doc.erase("baseline");
  doc["block"] = {{"variant", "avg_pool"}};
  doc["source"].erase("features");
  doc["source"]["embeddings"] = "en/embeddings.txt";
  const auto emb = run_experiment(experiment_from_json(doc, dir.path()));
  EXPECT_GT(emb.test.accuracy, 0.9);
}

TEST_F(ExperimentFixture, ReportsMissingOrInconsistentData) {
  auto s = spec(Protocol::few_shot, 10);
  s.target->features = dir / "missing.frzf";
  EXPECT_THROW(run_experiment(s), FormatError);

  const auto other_dim = write_synthetic(dir.path(), {.prefix = "de", .size = 30, .dim = 5, .seed = 3});
  s = spec(Protocol::few_shot, 10);
  s.target = other_dim;
  EXPECT_THROW(run_experiment(s), DataError);

  s = spec(Protocol::unilingual);
  s.source.bundle = target.bundle;  // ids absent from the source corpus
  EXPECT_THROW(run_experiment(s), DataError);
}

TEST_F(ExperimentFixture, SweepWritesOneRecordPerPercentage) {
  auto base = spec(Protocol::few_shot, 0);
  base.output_dir = dir / "sweep";
  const std::vector<double> pcts{0, 1, 5, 10, 25, 50, 100};
  const auto rows = run_sweep(base, pcts, 3);
  ASSERT_EQ(rows.size(), pcts.size());
  std::size_t dirs = 0;
  for (const auto& entry : fs::directory_iterator(dir / "sweep")) dirs += entry.is_directory();
  EXPECT_EQ(dirs, pcts.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::ostringstream name;
    name << "pct_" << pcts[i];
    const auto run = json::parse(slurp(dir / "sweep" / name.str() / "run.json"));
    EXPECT_EQ(rows[i].pct, pcts[i]);
    EXPECT_EQ(run["result"]["test"]["f1"].get<double>(), rows[i].test.f1);
    EXPECT_EQ(run["result"]["injected"].get<std::size_t>(), rows[i].injected);
  }
  const auto serial = run_sweep(base, pcts, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(serial[i].test.f1, rows[i].test.f1);

  const auto table = sweep_summary_table(rows);
  EXPECT_NE(table.find(format_pct(rows.back().test.f1)), std::string::npos);
  EXPECT_EQ(sweep_summary_json(rows).size(), pcts.size());
}

TEST(SeedPlan, StreamsAreDistinctAndStable) {
  const SeedPlan a(5), b(5), c(6);
  EXPECT_EQ(a.init, b.init);
  EXPECT_EQ(a.sample, b.sample);
  EXPECT_NE(a.init, a.train);
  EXPECT_NE(a.sample, c.sample);
}
