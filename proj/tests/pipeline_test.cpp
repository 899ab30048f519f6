#include <gtest/gtest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "support/synthetic.hpp"
#include "tabblend/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tabblend;
using nlohmann::json;

// Small, fast hyperparameters shared by every CLI run here.
const char* kFastConfig =
    "gbdt.n_trees = 25\n"
    "gbdt.max_depth = 3\n"
    "xdeepfm.epochs = 3\n"
    "xdeepfm.batch_size = 64\n"
    "xdeepfm.learning_rate = 0.003\n"
    "xdeepfm.deep_widths = 16, 8\n"
    "xdeepfm.embedding_dim = 4\n"
    "blend.grid_step = 0.05\n"
    "seed = 7\n";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

struct Exec {
  int status = -1;
  std::string out;
};

Exec cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(TABBLEND_CLI) + " " + args + " > " + quote(capture) + " 2>&1";
  const int raw = std::system(cmd.c_str());
  Exec e;
  e.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  e.out = slurp(capture);
  return e;
}

struct CsvColumn {
  std::vector<std::size_t> ids;
  std::vector<double> values;
};

CsvColumn read_predictions(const std::string& text) {
  CsvColumn c;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row_id,probability");
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    c.ids.push_back(std::stoul(line.substr(0, comma)));
    double v = 0;
    std::from_chars(line.data() + comma + 1, line.data() + line.size(), v);
    c.values.push_back(v);
  }
  return c;
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("tabblend_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    spit(dir_ / "data.csv", synthetic::stroke_like_csv(1200, 21));
    spit(dir_ / "stroke.schema", synthetic::stroke_schema_text());
    spit(dir_ / "run.cfg", std::string("data = data.csv\nschema = stroke.schema\nout = out\n") + kFastConfig);
    first_ = cli("run -c " + quote(dir_ / "run.cfg"), dir_ / "run1.log");
  }

  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path dir_;
  static Exec first_;
};

fs::path PipelineTest::dir_;
Exec PipelineTest::first_;

TEST_F(PipelineTest, RunWritesEveryArtifact) {
  ASSERT_EQ(first_.status, 0) << first_.out;
  for (const char* name : {"gbdt.json", "xdeepfm.json", "ensemble.json", "predictions_gbdt.csv",
                           "predictions_xdeepfm.csv", "predictions_ensemble.csv", "search_record.csv", "report.txt"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / name)) << name;
  }
  const auto report = slurp(dir_ / "out" / "report.txt");
  for (const char* row : {"GBDT", "xDeepFM", "Ensemble", "seeds: split=7"}) EXPECT_NE(report.find(row), std::string::npos);
  for (const char* name : {"gbdt.json", "xdeepfm.json", "ensemble.json"}) {
    const auto j = json::parse(slurp(dir_ / "out" / name));
    EXPECT_EQ(j.at("format_version"), 1) << name;
    EXPECT_EQ(j.at("seeds").at("split"), 7u) << name;
  }
  const auto record = slurp(dir_ / "out" / "search_record.csv");
  EXPECT_EQ(record.rfind("alpha,auc\n", 0), 0u);
  EXPECT_EQ(std::count(record.begin(), record.end(), '\n'), 22);  // header + 21 grid points
}

TEST_F(PipelineTest, IdenticalRunsAreByteIdentical) {
  ASSERT_EQ(first_.status, 0);
  spit(dir_ / "run2.cfg", std::string("data = data.csv\nschema = stroke.schema\nout = out2\n") + kFastConfig);
  ASSERT_EQ(cli("run -c " + quote(dir_ / "run2.cfg"), dir_ / "run2.log").status, 0);
  for (const auto& entry : fs::directory_iterator(dir_ / "out")) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(dir_ / "out2" / name)) << name;
  }
}

TEST_F(PipelineTest, FlagsOverrideTheConfigFile) {
  ASSERT_EQ(first_.status, 0);
  const auto out = dir_ / "flagged";
  const auto r = cli("run -c " + quote(dir_ / "run.cfg") + " -o " + quote(out) + " --seed 8 --set gbdt.n_trees=3",
                     dir_ / "flags.log");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto g = json::parse(slurp(out / "gbdt.json"));
  EXPECT_LE(g.at("trees").size(), 3u);
  EXPECT_EQ(g.at("seeds").at("split"), 8u);
}

TEST_F(PipelineTest, MissingDataFileExitsTwoWithoutArtifacts) {
  const auto out = dir_ / "never";
  const auto r = cli("run -c " + quote(dir_ / "run.cfg") + " --data " + quote(dir_ / "absent.csv") + " -o " + quote(out),
                     dir_ / "missing.log");
  EXPECT_EQ(r.status, 2) << r.out;
  EXPECT_NE(r.out.find("data error"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(PipelineTest, ConfigErrorsExitOne) {
  spit(dir_ / "bad.cfg", "data = data.csv\nschema = stroke.schema\nno_such_key = 3\n");
  const auto r = cli("run -c " + quote(dir_ / "bad.cfg"), dir_ / "bad.log");
  EXPECT_EQ(r.status, 1) << r.out;
  EXPECT_NE(r.out.find("config error"), std::string::npos);
  EXPECT_EQ(cli("run -c " + quote(dir_ / "run.cfg") + " --set gbdt.learning_rate=0", dir_ / "bad2.log").status, 1);
  EXPECT_EQ(cli("frobnicate", dir_ / "bad3.log").status, 1);
}

TEST_F(PipelineTest, DivergentTrainingExitsThree) {
  const auto out = dir_ / "diverged";
  const auto r = cli("run -c " + quote(dir_ / "run.cfg") + " -o " + quote(out) +
                         " --set xdeepfm.learning_rate=1e300 xdeepfm.embedding_init=1e150",
                     dir_ / "diverge.log");
  EXPECT_EQ(r.status, 3) << r.out;
  EXPECT_NE(r.out.find("training error"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(out / "gbdt.json"));
}

TEST_F(PipelineTest, EnsemblePredictionsRecomposeFromComponentFiles) {
  ASSERT_EQ(first_.status, 0);
  const auto r = cli("predict -m " + quote(dir_ / "out" / "ensemble.json") + " -d " + quote(dir_ / "data.csv"),
                     dir_ / "pred.csv");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto pred = read_predictions(r.out);
  ASSERT_EQ(pred.values.size(), 1200u);
  for (std::size_t i = 0; i < pred.ids.size(); ++i) ASSERT_EQ(pred.ids[i], i);

  // independent recomposition: component files + alpha read straight from JSON
  const auto gj = json::parse(slurp(dir_ / "out" / "gbdt.json"));
  const auto xj = json::parse(slurp(dir_ / "out" / "xdeepfm.json"));
  const double alpha = json::parse(slurp(dir_ / "out" / "ensemble.json")).at("alpha").get<double>();
  const auto g = gbdt::model_from_json(gj);
  const auto x = xdeepfm::model_from_json(xj);
  const auto ft = gj.at("transform").get<dataset::FittedTransform>();
  const auto dm = dataset::apply_transform(ft, dataset::load_csv((dir_ / "data.csv").string(), ft.schema));
  const auto pg = gbdt::predict_gbdt(g, dm.dense);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double expect = alpha * pg[i] + (1 - alpha) * xdeepfm::forward(x, dm.cat_indices.row(i), dm.dense.row(i));
    ASSERT_EQ(pred.values[i], expect) << i;
    ASSERT_GT(pred.values[i], 0.0);
    ASSERT_LT(pred.values[i], 1.0);
  }
}

TEST_F(PipelineTest, PredictWithoutTargetColumnAndToFile) {
  ASSERT_EQ(first_.status, 0);
  // strip the target column
  std::istringstream in(slurp(dir_ / "data.csv"));
  std::string line, stripped;
  while (std::getline(in, line)) stripped += line.substr(0, line.rfind(',')) + "\n";
  spit(dir_ / "unlabelled.csv", stripped);
  const auto dest = dir_ / "unlabelled_pred.csv";
  const auto r = cli("predict -m " + quote(dir_ / "out" / "gbdt.json") + " -d " + quote(dir_ / "unlabelled.csv") +
                         " -o " + quote(dest),
                     dir_ / "pred2.log");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto labelled = cli("predict -m " + quote(dir_ / "out" / "gbdt.json") + " -d " + quote(dir_ / "data.csv"),
                            dir_ / "pred3.csv");
  EXPECT_EQ(slurp(dest), labelled.out);
}

TEST_F(PipelineTest, ZeroTreeModelPredictsAConstant) {
  const auto out = dir_ / "zero";
  ASSERT_EQ(cli("run -c " + quote(dir_ / "run.cfg") + " -o " + quote(out) + " --set gbdt.n_trees=0", dir_ / "z.log").status,
            0);
  const auto r = cli("predict -m " + quote(out / "gbdt.json") + " -d " + quote(dir_ / "data.csv"), dir_ / "z.csv");
  ASSERT_EQ(r.status, 0);
  const auto pred = read_predictions(r.out);
  const double base = json::parse(slurp(out / "gbdt.json")).at("base_score").get<double>();
  for (double v : pred.values) EXPECT_NEAR(v, base, 1e-15);
}

TEST_F(PipelineTest, PredictRejectsBadModelFiles) {
  ASSERT_EQ(first_.status, 0);
  auto j = json::parse(slurp(dir_ / "out" / "gbdt.json"));
  j["format_version"] = 42;
  spit(dir_ / "future.json", j.dump());
  EXPECT_EQ(cli("predict -m " + quote(dir_ / "future.json") + " -d " + quote(dir_ / "data.csv"), dir_ / "f.log").status, 2);
  spit(dir_ / "garbage.json", "{not json");
  EXPECT_EQ(cli("predict -m " + quote(dir_ / "garbage.json") + " -d " + quote(dir_ / "data.csv"), dir_ / "g.log").status,
            2);
  spit(dir_ / "wrong_header.csv", "a,b\n1,2\n");
  EXPECT_EQ(cli("predict -m " + quote(dir_ / "out" / "gbdt.json") + " -d " + quote(dir_ / "wrong_header.csv"),
                dir_ / "h.log")
                .status,
            2);
}

// Sums gains per feature by walking the serialized trees directly.
void walk(const json& node, std::map<std::size_t, double>& gain) {
  if (!node.contains("left")) return;
  gain[node.at("feature").get<std::size_t>()] += node.at("gain").get<double>();
  walk(node.at("left"), gain);
  walk(node.at("right"), gain);
}

TEST_F(PipelineTest, ImportanceMatchesRecomputationFromSerializedTrees) {
  ASSERT_EQ(first_.status, 0);
  const auto gj = json::parse(slurp(dir_ / "out" / "gbdt.json"));
  std::map<std::size_t, double> gain;
  for (const auto& t : gj.at("trees")) walk(t, gain);
  ASSERT_FALSE(gain.empty());
  std::size_t best = gain.begin()->first;
  for (const auto& [f, v] : gain) {
    if (v > gain[best]) best = f;
  }
  const auto names = gj.at("feature_names").get<std::vector<std::string>>();

  const auto r = cli("importance -m " + quote(dir_ / "out" / "gbdt.json"), dir_ / "imp.txt");
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream in(r.out);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_NE(first.find(names[best]), std::string::npos) << first;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 11);

  const auto all = cli("importance -k 1000 -m " + quote(dir_ / "out" / "gbdt.json"), dir_ / "imp_all.txt");
  EXPECT_EQ(static_cast<std::size_t>(std::count(all.out.begin(), all.out.end(), '\n')), names.size() + 1);

  EXPECT_EQ(cli("importance -m " + quote(dir_ / "out" / "xdeepfm.json"), dir_ / "imp_bad.txt").status, 2);
}

TEST_F(PipelineTest, EvaluatePrintsThreeRowsForAnEnsemble) {
  ASSERT_EQ(first_.status, 0);
  const auto roc = dir_ / "roc.csv";
  const auto r = cli("evaluate -m " + quote(dir_ / "out" / "ensemble.json") + " -d " + quote(dir_ / "data.csv") +
                         " --roc-csv " + quote(roc),
                     dir_ / "eval.txt");
  ASSERT_EQ(r.status, 0) << r.out;
  for (const char* row : {"GBDT", "xDeepFM", "Ensemble"}) EXPECT_NE(r.out.find(row), std::string::npos);
  EXPECT_EQ(slurp(roc).rfind("threshold,fpr,tpr\n", 0), 0u);
}

// ---------------------------------------------------------------------------
// In-process pipeline
// ---------------------------------------------------------------------------

pipeline::RunConfig fast_config(const fs::path& out, std::uint64_t seed) {
  auto kv = KeyValueFile::from_string(synthetic::stroke_schema_text() + kFastConfig);
  kv.set("seed", std::to_string(seed));
  kv.set("out", out.string());
  return pipeline::run_config_from(kv);
}

TEST(InProcessPipeline, ValidationEnsembleDominatesAndRoundTripIsExact) {
  const auto schema = dataset::Schema::from_keyvalue(KeyValueFile::from_string(synthetic::stroke_schema_text()));
  std::istringstream csv(synthetic::stroke_like_csv(900, 5));
  const auto data = dataset::load_csv(csv, schema);
  const auto out = fs::temp_directory_path() / ("tabblend_inproc_" + std::to_string(::getpid()));
  const auto rc = fast_config(out, 3);
  const auto res = pipeline::run_pipeline(rc, data);
  ASSERT_EQ(res.validation.size(), 3u);
  EXPECT_GE(res.validation[2].auc, res.validation[0].auc);
  EXPECT_GE(res.validation[2].auc, res.validation[1].auc);

  pipeline::write_artifacts(rc, res);
  const auto& tp = res.test_predictions;
  // rebuild the test design from the saved transform and compare every model kind
  const auto g = pipeline::load_model((out / "gbdt.json").string());
  const auto x = pipeline::load_model((out / "xdeepfm.json").string());
  const auto e = pipeline::load_model((out / "ensemble.json").string());
  const auto test_rows = dataset::subset(data, tp.row_ids);
  const auto dm = dataset::apply_transform(g.transform, test_rows);
  EXPECT_EQ(pipeline::predict(g, dm), tp.gbdt);
  EXPECT_EQ(pipeline::predict(x, dm), tp.xdeepfm);
  EXPECT_EQ(pipeline::predict(e, dm), tp.ensemble);
  fs::remove_all(out);
}

TEST(InProcessPipeline, RelativePathsResolveAgainstTheConfigDirectory) {
  auto kv = KeyValueFile::from_string("data = d.csv\nschema = ../s.schema\nout = o\n");
  spit(fs::temp_directory_path() / "tabblend_rel.schema", synthetic::stroke_schema_text());
  kv.set("schema", "../tabblend_rel.schema");
  const auto base = fs::temp_directory_path() / "cfgdir";
  const auto rc = pipeline::run_config_from(kv, base);
  EXPECT_EQ(rc.data_path, (base / "d.csv").string());
  EXPECT_EQ(rc.out_dir, (base / "o").string());
  EXPECT_EQ(rc.schema.columns.size(), 12u);
  fs::remove(fs::temp_directory_path() / "tabblend_rel.schema");
}

TEST(InProcessPipeline, ShippedStrokeConfigParses) {
  const fs::path cfg = fs::path(TABBLEND_SOURCE_DIR) / "config" / "stroke.cfg";
  const auto rc = pipeline::run_config_from(KeyValueFile::load(cfg.string()), cfg.parent_path());
  EXPECT_EQ(rc.schema.columns.size(), 12u);
  EXPECT_EQ(rc.schema.columns[rc.schema.target_index()].name, "stroke");
  EXPECT_EQ(rc.gbdt.n_trees, 200u);
  EXPECT_EQ(rc.xdeepfm.deep_widths, (std::vector<std::size_t>{64, 32}));
}

}  // namespace
