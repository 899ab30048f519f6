// tabblend command-line driver: run | predict | importance | evaluate

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tabblend/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tabblend;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::model: return 2;
    case ErrorKind::training: return 3;
  }
  return 1;
}

const char* stage_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::model: return "model";
    case ErrorKind::training: return "training";
  }
  return "?";
}

struct RunArgs {
  std::string config;
  std::string data;
  std::string schema;
  std::string out;
  std::string seed;
  std::string test_fraction;
  std::vector<std::string> overrides;
};

int cmd_run(const RunArgs& a) {
  KeyValueFile kv;
  fs::path base;
  if (!a.config.empty()) {
    kv = KeyValueFile::load(a.config);
    base = fs::path(a.config).parent_path();
  }
  for (const auto& o : a.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, "--set expects key=value, got: " + o);
    kv.set(std::string(trim(std::string_view(o).substr(0, eq))), std::string(trim(std::string_view(o).substr(eq + 1))));
  }
  auto path_flag = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv.set(key, fs::absolute(v).string());
  };
  path_flag("data", a.data);
  path_flag("schema", a.schema);
  path_flag("out", a.out);
  if (!a.seed.empty()) kv.set("seed", a.seed);
  if (!a.test_fraction.empty()) kv.set("test_fraction", a.test_fraction);
  const auto rc = pipeline::run_config_from(kv, base);
  if (rc.data_path.empty()) throw Error(ErrorKind::config, "no data path given (config key 'data' or --data)");

  const auto data = dataset::load_csv(rc.data_path, rc.schema);
  const auto res = pipeline::run_pipeline(rc, data);
  pipeline::write_artifacts(rc, res);
  std::cout << pipeline::report_text(rc, res);
  std::cout << "\nartifacts written to " << rc.out_dir << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& out_path) {
  const auto m = pipeline::load_model(model_path);
  const auto scored = pipeline::score_file(m, data_path);
  const auto csv = pipeline::predictions_csv(scored.data.source_rows, scored.probabilities);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    pipeline::write_atomic(out_path, csv);
  }
  return 0;
}

int cmd_importance(const std::string& model_path, std::size_t top_k) {
  const auto m = pipeline::load_model(model_path);
  if (m.kind != pipeline::ModelKind::gbdt) {
    throw Error(ErrorKind::model, model_path + " is not a GBDT model file");
  }
  std::cout << pipeline::importance_table(pipeline::top_features(m.gbdt, top_k));
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path, const std::string& roc_path) {
  const auto m = pipeline::load_model(model_path);
  const auto scored = pipeline::score_file(m, data_path);
  if (!scored.data.has_target) throw Error(ErrorKind::data, "evaluate needs a labelled data file");
  const auto& y = scored.design.labels;
  std::vector<metrics::EvalReport> rows;
  if (m.kind == pipeline::ModelKind::ensemble) {
    rows.push_back(metrics::evaluate("GBDT", y, gbdt::predict_gbdt(m.gbdt, scored.design.dense)));
    rows.push_back(metrics::evaluate("xDeepFM", y, xdeepfm::predict(m.xdeepfm, scored.design)));
    rows.push_back(metrics::evaluate("Ensemble", y, scored.probabilities));
  } else {
    rows.push_back(metrics::evaluate(m.kind == pipeline::ModelKind::gbdt ? "GBDT" : "xDeepFM", y, scored.probabilities));
  }
  std::cout << metrics::format_report(rows);
  if (!roc_path.empty()) {
    std::ostringstream out;
    metrics::write_roc_csv(out, metrics::roc_curve(y, scored.probabilities));
    pipeline::write_atomic(roc_path, out.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-boosted trees + embedding/cross/deep network blended by grid-searched AUC"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "split, train both models, pick the blend weight, evaluate, write artifacts");
  run->add_option("-c,--config", run_args.config, "key = value run config");
  run->add_option("--data", run_args.data, "CSV data file (overrides config)");
  run->add_option("--schema", run_args.schema, "schema file (overrides config)");
  run->add_option("-o,--out", run_args.out, "output directory (overrides config)");
  run->add_option("--seed", run_args.seed, "master seed (overrides config)");
  run->add_option("--test-fraction", run_args.test_fraction, "held-out test fraction (overrides config)");
  run->add_option("--set", run_args.overrides, "extra key=value config overrides")->take_all();

  std::string model_path;
  std::string data_path;
  std::string out_path;
  std::size_t top_k = 10;

  auto* predict = app.add_subcommand("predict", "score a CSV with a saved gbdt, xdeepfm or ensemble model");
  predict->add_option("-m,--model", model_path, "model file")->required();
  predict->add_option("-d,--data", data_path, "CSV data file")->required();
  predict->add_option("-o,--out", out_path, "write predictions here instead of stdout");

  auto* importance = app.add_subcommand("importance", "top-k GBDT features by normalized split gain");
  importance->add_option("-m,--model", model_path, "gbdt model file")->required();
  importance->add_option("-k,--top", top_k, "number of features to list");

  std::string roc_path;
  auto* evaluate = app.add_subcommand("evaluate", "AUC/BCE report for a saved model on a labelled CSV");
  evaluate->add_option("-m,--model", model_path, "model file")->required();
  evaluate->add_option("-d,--data", data_path, "labelled CSV data file")->required();
  evaluate->add_option("--roc-csv", roc_path, "also write ROC points (threshold,fpr,tpr)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*predict) return cmd_predict(model_path, data_path, out_path);
    if (*importance) return cmd_importance(model_path, top_k);
    if (*evaluate) return cmd_evaluate(model_path, data_path, roc_path);
  } catch (const Error& e) {
    std::cerr << "tabblend: " << stage_name(e.kind()) << " error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "tabblend: error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
