#pragma once

// End-to-end orchestration: split, preprocess, train both learners, pick the
// blend coefficient on a validation split, evaluate on the test split, and
// persist every artifact.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabblend/dataset.hpp"
#include "tabblend/ensemble.hpp"
#include "tabblend/gbdt.hpp"
#include "tabblend/keyvalue.hpp"
#include "tabblend/metrics.hpp"
#include "tabblend/xdeepfm.hpp"

namespace tabblend::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunConfig {
  std::string data_path;
  std::string schema_path;  // empty: schema columns live in the run config itself
  std::string out_dir = "out";
  double test_fraction = 0.2;
  double val_fraction = 0.2;
  std::uint64_t seed = 42;
  dataset::EncodingMode encoding = dataset::EncodingMode::one_hot;
  dataset::Schema schema;
  gbdt::GBDTConfig gbdt;
  xdeepfm::XDeepFMConfig xdeepfm;
  ensemble::BlendConfig blend;
};

namespace detail {

inline std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    if (t.empty()) continue;
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) throw Error(ErrorKind::config, "bad layer width list: " + s);
    out.push_back(v);
  }
  return out;
}

inline std::size_t non_negative(long long v, const char* key) {
  if (v < 0) throw Error(ErrorKind::config, std::string(key) + " must be non-negative");
  return static_cast<std::size_t>(v);
}

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "data", "schema", "out", "test_fraction", "val_fraction", "seed", "encoding_mode",
      "missing_token", "positive_label", "column",
      "gbdt.n_trees", "gbdt.max_depth", "gbdt.learning_rate", "gbdt.lambda1", "gbdt.lambda2", "gbdt.gamma",
      "gbdt.min_child_hessian", "gbdt.base_score", "gbdt.seed",
      "xdeepfm.embedding_dim", "xdeepfm.cross_layers", "xdeepfm.deep_widths", "xdeepfm.activation",
      "xdeepfm.learning_rate", "xdeepfm.beta1", "xdeepfm.beta2", "xdeepfm.epsilon", "xdeepfm.batch_size",
      "xdeepfm.epochs", "xdeepfm.embedding_init", "xdeepfm.seed", "blend.grid_step"};
  return keys;
}

inline std::string resolve(const std::string& path, const fs::path& base) {
  if (path.empty()) return path;
  const fs::path p(path);
  return p.is_absolute() || base.empty() ? path : (base / p).lexically_normal().string();
}

}  // namespace detail

/// Builds a RunConfig from key-value entries. Relative `data`, `schema` and
/// `out` paths are taken relative to `base_dir`.
inline RunConfig run_config_from(const KeyValueFile& kv, const fs::path& base_dir = {}) {
  for (const auto& [k, v] : kv.entries()) {
    const auto& keys = detail::known_keys();
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw Error(ErrorKind::config, "unknown config key: " + k);
  }
  RunConfig rc;
  rc.data_path = detail::resolve(kv.get_string("data", ""), base_dir);
  rc.schema_path = detail::resolve(kv.get_string("schema", ""), base_dir);
  rc.out_dir = detail::resolve(kv.get_string("out", rc.out_dir), base_dir);
  rc.test_fraction = kv.get_double("test_fraction", rc.test_fraction);
  rc.val_fraction = kv.get_double("val_fraction", rc.val_fraction);
  rc.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(rc.seed)));

  KeyValueFile schema_kv = rc.schema_path.empty() ? kv : KeyValueFile::load(rc.schema_path);
  if (!rc.schema_path.empty()) {
    // run-config keys override the schema file
    for (const auto& key : {"missing_token", "positive_label", "encoding_mode"}) {
      if (auto v = kv.get(key)) schema_kv.set(key, *v);
    }
  }
  rc.schema = dataset::Schema::from_keyvalue(schema_kv);
  rc.encoding = dataset::parse_encoding_mode(schema_kv.get_string("encoding_mode", "one_hot"));

  auto& g = rc.gbdt;
  g.n_trees = detail::non_negative(kv.get_int("gbdt.n_trees", static_cast<long long>(g.n_trees)), "gbdt.n_trees");
  g.max_depth = detail::non_negative(kv.get_int("gbdt.max_depth", static_cast<long long>(g.max_depth)), "gbdt.max_depth");
  g.learning_rate = kv.get_double("gbdt.learning_rate", g.learning_rate);
  g.lambda1 = kv.get_double("gbdt.lambda1", g.lambda1);
  g.lambda2 = kv.get_double("gbdt.lambda2", g.lambda2);
  g.gamma = kv.get_double("gbdt.gamma", g.gamma);
  g.min_child_hessian = kv.get_double("gbdt.min_child_hessian", g.min_child_hessian);
  if (kv.get("gbdt.base_score")) g.base_score = kv.get_double("gbdt.base_score", 0.5);
  g.seed = static_cast<std::uint64_t>(kv.get_int("gbdt.seed", static_cast<long long>(rc.seed)));
  g.validate();

  auto& x = rc.xdeepfm;
  x.embedding_dim = detail::non_negative(kv.get_int("xdeepfm.embedding_dim", static_cast<long long>(x.embedding_dim)),
                                         "xdeepfm.embedding_dim");
  x.cross_layers = detail::non_negative(kv.get_int("xdeepfm.cross_layers", static_cast<long long>(x.cross_layers)),
                                        "xdeepfm.cross_layers");
  if (auto w = kv.get("xdeepfm.deep_widths")) x.deep_widths = detail::parse_widths(*w);
  if (auto a = kv.get("xdeepfm.activation")) x.activation = xdeepfm::parse_activation(*a);
  x.learning_rate = kv.get_double("xdeepfm.learning_rate", x.learning_rate);
  x.beta1 = kv.get_double("xdeepfm.beta1", x.beta1);
  x.beta2 = kv.get_double("xdeepfm.beta2", x.beta2);
  x.epsilon = kv.get_double("xdeepfm.epsilon", x.epsilon);
  x.batch_size = detail::non_negative(kv.get_int("xdeepfm.batch_size", static_cast<long long>(x.batch_size)),
                                      "xdeepfm.batch_size");
  x.epochs = detail::non_negative(kv.get_int("xdeepfm.epochs", static_cast<long long>(x.epochs)), "xdeepfm.epochs");
  x.embedding_init = kv.get_double("xdeepfm.embedding_init", x.embedding_init);
  x.seed = static_cast<std::uint64_t>(kv.get_int("xdeepfm.seed", static_cast<long long>(rc.seed)));
  x.validate();

  rc.blend.grid_step = kv.get_double("blend.grid_step", rc.blend.grid_step);
  rc.blend.validate();

  if (!(rc.test_fraction > 0.0 && rc.test_fraction < 1.0)) throw Error(ErrorKind::config, "test_fraction must lie in (0,1)");
  if (!(rc.val_fraction > 0.0 && rc.val_fraction < 1.0)) throw Error(ErrorKind::config, "val_fraction must lie in (0,1)");
  return rc;
}

inline std::uint64_t validation_seed(const RunConfig& rc) { return rc.seed + 1; }

// ---------------------------------------------------------------------------
// Training and evaluation in memory
// ---------------------------------------------------------------------------

struct Predictions {
  std::vector<std::size_t> row_ids;
  std::vector<int> labels;
  std::vector<double> gbdt;
  std::vector<double> xdeepfm;
  std::vector<double> ensemble;
};

struct RunResult {
  dataset::FittedTransform transform;
  gbdt::GBDTModel gbdt;
  xdeepfm::XDeepFMModel xdeepfm;
  ensemble::SearchResult search;
  std::vector<metrics::EvalReport> validation;  // GBDT, xDeepFM, Ensemble
  std::vector<metrics::EvalReport> test;
  Predictions test_predictions;
};

struct BlendedScores {
  std::vector<double> gbdt;
  std::vector<double> xdeepfm;
};

inline BlendedScores score_both(const gbdt::GBDTModel& g, const xdeepfm::XDeepFMModel& x,
                                const dataset::DesignMatrix& dm) {
  return {gbdt::predict_gbdt(g, dm.dense), xdeepfm::predict(x, dm)};
}

inline std::vector<metrics::EvalReport> evaluate_three(std::span<const int> y, const BlendedScores& s,
                                                       std::span<const double> blended) {
  return {metrics::evaluate("GBDT", y, s.gbdt), metrics::evaluate("xDeepFM", y, s.xdeepfm),
          metrics::evaluate("Ensemble", y, blended)};
}

/// split -> fit/apply transform -> train both -> grid-search alpha on the
/// validation split -> evaluate everything on the test split.
inline RunResult run_pipeline(const RunConfig& rc, const dataset::TabularDataset& data) {
  auto [train_all, test] = dataset::stratified_split(data, rc.test_fraction, rc.seed);
  auto [fit, val] = dataset::stratified_split(train_all, rc.val_fraction, validation_seed(rc));

  RunResult res;
  auto [ft, dm_fit] = dataset::fit_transform(fit, rc.encoding);
  const auto dm_val = dataset::apply_transform(ft, val);
  const auto dm_test = dataset::apply_transform(ft, test);
  res.transform = std::move(ft);

  res.gbdt = gbdt::train_gbdt(dm_fit, rc.gbdt);
  res.xdeepfm = xdeepfm::train_xdeepfm(dm_fit, rc.xdeepfm);

  const auto val_scores = score_both(res.gbdt, res.xdeepfm, dm_val);
  res.search = ensemble::grid_search_alpha(dm_val.labels, val_scores.gbdt, val_scores.xdeepfm, rc.blend);
  res.validation = evaluate_three(dm_val.labels, val_scores,
                                  ensemble::blend(val_scores.gbdt, val_scores.xdeepfm, res.search.alpha));

  const auto test_scores = score_both(res.gbdt, res.xdeepfm, dm_test);
  auto& tp = res.test_predictions;
  tp.row_ids = test.source_rows;
  tp.labels = dm_test.labels;
  tp.gbdt = test_scores.gbdt;
  tp.xdeepfm = test_scores.xdeepfm;
  tp.ensemble = ensemble::blend(tp.gbdt, tp.xdeepfm, res.search.alpha);
  res.test = evaluate_three(dm_test.labels, test_scores, tp.ensemble);
  return res;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Writes through a sibling temp file and renames it into place.
inline void write_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::data, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(ErrorKind::data, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string predictions_csv(std::span<const std::size_t> row_ids, std::span<const double> p) {
  std::string out = "row_id,probability\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    out += std::to_string(row_ids[i]);
    out += ',';
    out += format_double(p[i]);
    out += '\n';
  }
  return out;
}

inline std::string search_record_csv(std::span<const ensemble::GridPoint> record) {
  std::string out = "alpha,auc\n";
  for (const auto& g : record) out += format_double(g.alpha) + "," + format_double(g.auc) + "\n";
  return out;
}

inline json seeds_json(const RunConfig& rc) {
  return json{{"split", rc.seed}, {"validation", validation_seed(rc)}, {"gbdt", rc.gbdt.seed}, {"xdeepfm", rc.xdeepfm.seed}};
}

inline std::string report_text(const RunConfig& rc, const RunResult& res) {
  std::ostringstream out;
  out << "tabblend run report (format_version " << ensemble::kFormatVersion << ")\n";
  out << "seeds: split=" << rc.seed << " validation=" << validation_seed(rc) << " gbdt=" << rc.gbdt.seed
      << " xdeepfm=" << rc.xdeepfm.seed << "\n";
  out << "alpha (weight on GBDT): " << format_double(res.search.alpha) << "\n\n";
  out << "Test set\n" << metrics::format_report(res.test) << "\n";
  out << "Validation set (alpha selection)\n" << metrics::format_report(res.validation);
  return out.str();
}

inline json model_file(json body, const dataset::FittedTransform& ft, const json& seeds) {
  body["transform"] = ft;
  body["seeds"] = seeds;
  return body;
}

/// Writes gbdt.json, xdeepfm.json, ensemble.json, per-model test predictions,
/// search_record.csv and report.txt into rc.out_dir.
inline void write_artifacts(const RunConfig& rc, const RunResult& res) {
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  const auto seeds = seeds_json(rc);
  write_atomic(dir / "gbdt.json", model_file(gbdt::model_to_json(res.gbdt), res.transform, seeds).dump(1) + "\n");
  write_atomic(dir / "xdeepfm.json", model_file(xdeepfm::model_to_json(res.xdeepfm), res.transform, seeds).dump(1) + "\n");
  ensemble::EnsembleModel em{res.search.alpha, "gbdt.json", "xdeepfm.json", res.search.record};
  auto ej = ensemble::model_to_json(em);
  ej["seeds"] = seeds;
  write_atomic(dir / "ensemble.json", ej.dump(1) + "\n");

  const auto& tp = res.test_predictions;
  write_atomic(dir / "predictions_gbdt.csv", predictions_csv(tp.row_ids, tp.gbdt));
  write_atomic(dir / "predictions_xdeepfm.csv", predictions_csv(tp.row_ids, tp.xdeepfm));
  write_atomic(dir / "predictions_ensemble.csv", predictions_csv(tp.row_ids, tp.ensemble));
  write_atomic(dir / "search_record.csv", search_record_csv(res.search.record));
  write_atomic(dir / "report.txt", report_text(rc, res));
}

// ---------------------------------------------------------------------------
// Loading saved models
// ---------------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open model file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::model, path + ": malformed model file: " + e.what());
  }
}

enum class ModelKind { gbdt, xdeepfm, ensemble };

/// A saved model of any kind with the transforms needed to score raw CSV rows.
struct LoadedModel {
  ModelKind kind = ModelKind::gbdt;
  dataset::FittedTransform transform;
  gbdt::GBDTModel gbdt;
  xdeepfm::XDeepFMModel xdeepfm;
  double alpha = 0.0;
};

inline LoadedModel load_model(const std::string& path) {
  const auto j = read_json_file(path);
  LoadedModel m;
  try {
    const auto kind = j.value("kind", std::string{});
    if (kind == "gbdt") {
      m.kind = ModelKind::gbdt;
      m.gbdt = gbdt::model_from_json(j);
      m.transform = j.at("transform").get<dataset::FittedTransform>();
    } else if (kind == "xdeepfm") {
      m.kind = ModelKind::xdeepfm;
      m.xdeepfm = xdeepfm::model_from_json(j);
      m.transform = j.at("transform").get<dataset::FittedTransform>();
    } else if (kind == "ensemble") {
      m.kind = ModelKind::ensemble;
      const auto em = ensemble::model_from_json(j);
      const auto base = fs::path(path).parent_path();
      const auto g = load_model(detail::resolve(em.gbdt_path, base));
      const auto x = load_model(detail::resolve(em.xdeepfm_path, base));
      if (g.kind != ModelKind::gbdt || x.kind != ModelKind::xdeepfm) {
        throw Error(ErrorKind::model, "ensemble components have the wrong model kinds");
      }
      if (!(g.transform == x.transform)) throw Error(ErrorKind::model, "ensemble components disagree on preprocessing");
      m.gbdt = g.gbdt;
      m.xdeepfm = x.xdeepfm;
      m.transform = g.transform;
      m.alpha = em.alpha;
    } else {
      throw Error(ErrorKind::model, path + ": unknown model kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::model, path + ": malformed model file: " + e.what());
  }
  return m;
}

inline std::vector<double> predict(const LoadedModel& m, const dataset::DesignMatrix& dm) {
  switch (m.kind) {
    case ModelKind::gbdt: return gbdt::predict_gbdt(m.gbdt, dm.dense);
    case ModelKind::xdeepfm: return xdeepfm::predict(m.xdeepfm, dm);
    case ModelKind::ensemble:
      return ensemble::blend(gbdt::predict_gbdt(m.gbdt, dm.dense), xdeepfm::predict(m.xdeepfm, dm), m.alpha);
  }
  return {};
}

struct ScoredFile {
  dataset::TabularDataset data;
  dataset::DesignMatrix design;
  std::vector<double> probabilities;
};

/// Loads `data_path` under the model's schema (target column optional) and
/// scores every row in input order.
inline ScoredFile score_file(const LoadedModel& m, const std::string& data_path) {
  ScoredFile s;
  s.data = dataset::load_csv(data_path, m.transform.schema);
  s.design = dataset::apply_transform(m.transform, s.data);
  s.probabilities = predict(m, s.design);
  return s;
}

struct ImportanceRow {
  std::size_t feature = 0;
  std::string name;
  double importance = 0.0;
};

/// Top-k features by normalized gain, descending; ties keep feature order.
inline std::vector<ImportanceRow> top_features(const gbdt::GBDTModel& m, std::size_t k) {
  const auto imp = gbdt::feature_importance(m);
  std::vector<ImportanceRow> rows;
  for (std::size_t f = 0; f < imp.size(); ++f) rows.push_back({f, m.feature_names[f], imp[f]});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.importance > b.importance; });
  if (rows.size() > k) rows.resize(k);
  return rows;
}

inline std::string importance_table(std::span<const ImportanceRow> rows) {
  std::size_t w = 7;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  std::ostringstream out;
  out << std::left << std::setw(4) << "Rank" << "  " << std::setw(static_cast<int>(w)) << "Feature" << "  "
      << std::right << std::setw(10) << "Importance" << '\n';
  out << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << std::left << std::setw(4) << i + 1 << "  " << std::setw(static_cast<int>(w)) << rows[i].name << "  "
        << std::right << std::setw(10) << rows[i].importance << '\n';
  }
  return out.str();
}

}  // namespace tabblend::pipeline
