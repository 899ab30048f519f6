#pragma once

// Schema-driven CSV ingestion, stratified partitioning, and train-fitted
// preprocessing (median imputation, z-scoring, vocabularies) producing the
// dense matrix and categorical index columns consumed by both learners.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabblend/common.hpp"
#include "tabblend/keyvalue.hpp"

namespace tabblend::dataset {

using nlohmann::json;

// `ignore` columns (row ids and the like) must be declared so the header can
// be matched as a set, but they never reach either learner.
enum class ColumnKind { numeric, categorical, binary, target, ignore };

enum class EncodingMode { one_hot, label };

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::binary: return "binary";
    case ColumnKind::target: return "target";
    case ColumnKind::ignore: return "ignore";
  }
  return "?";
}

inline ColumnKind parse_column_kind(std::string_view s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "binary") return ColumnKind::binary;
  if (s == "target") return ColumnKind::target;
  if (s == "ignore") return ColumnKind::ignore;
  throw Error(ErrorKind::config, "unknown column kind: " + std::string(s));
}

inline std::string to_string(EncodingMode m) { return m == EncodingMode::one_hot ? "one_hot" : "label"; }

inline EncodingMode parse_encoding_mode(std::string_view s) {
  if (s == "one_hot") return EncodingMode::one_hot;
  if (s == "label") return EncodingMode::label;
  throw Error(ErrorKind::config, "unknown encoding_mode: " + std::string(s));
}

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  bool operator==(const Column&) const = default;
};

struct Schema {
  std::vector<Column> columns;
  std::string missing_token = "N/A";
  std::string positive_label = "1";

  bool operator==(const Schema&) const = default;

  std::size_t target_index() const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].kind == ColumnKind::target) return i;
    }
    throw Error(ErrorKind::config, "schema has no target column");
  }

  void validate() const {
    std::size_t targets = 0;
    std::set<std::string> names;
    for (const auto& c : columns) {
      if (c.kind == ColumnKind::target) ++targets;
      if (!names.insert(c.name).second) {
        throw Error(ErrorKind::config, "duplicate column name in schema: " + c.name);
      }
    }
    if (targets != 1) {
      throw Error(ErrorKind::config, "schema must declare exactly one target column, found " + std::to_string(targets));
    }
  }

  /// Reads `column = name:kind` entries (in order) plus `missing_token` and
  /// `positive_label`.
  static Schema from_keyvalue(const KeyValueFile& kv) {
    Schema s;
    s.missing_token = kv.get_string("missing_token", s.missing_token);
    s.positive_label = kv.get_string("positive_label", s.positive_label);
    for (const auto& spec : kv.get_all("column")) {
      const auto colon = spec.rfind(':');
      if (colon == std::string::npos) {
        throw Error(ErrorKind::config, "column entry must be 'name:kind', got: " + spec);
      }
      s.columns.push_back({std::string(trim(std::string_view(spec).substr(0, colon))),
                           parse_column_kind(trim(std::string_view(spec).substr(colon + 1)))});
    }
    s.validate();
    return s;
  }
};

inline void to_json(json& j, const Schema& s) {
  json cols = json::array();
  for (const auto& c : s.columns) cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  j = json{{"columns", cols}, {"missing_token", s.missing_token}, {"positive_label", s.positive_label}};
}

inline void from_json(const json& j, Schema& s) {
  s.columns.clear();
  for (const auto& c : j.at("columns")) {
    s.columns.push_back({c.at("name").get<std::string>(), parse_column_kind(c.at("kind").get<std::string>())});
  }
  s.missing_token = j.at("missing_token").get<std::string>();
  s.positive_label = j.at("positive_label").get<std::string>();
  s.validate();
}

struct TabularDataset {
  Schema schema;
  std::vector<std::vector<std::string>> rows;  // cells in schema order
  std::vector<std::size_t> source_rows;        // 0-based data-row index in the originating file
  bool has_target = true;

  std::size_t n_rows() const noexcept { return rows.size(); }
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvRecord {
  std::vector<std::string> cells;
  std::size_t line = 0;  // 1-based line where the record starts
};

/// RFC-4180 reader: quoted fields, doubled quotes, CRLF, embedded newlines.
/// Blank lines are skipped.
inline std::vector<CsvRecord> parse_csv(std::istream& in) {
  std::vector<CsvRecord> out;
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);

  CsvRecord rec;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  rec.line = 1;

  auto end_record = [&] {
    if (field_started || !rec.cells.empty()) {
      rec.cells.push_back(std::move(field));
      out.push_back(std::move(rec));
    }
    rec = CsvRecord{};
    field.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        rec.cells.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        rec.line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorKind::data, "unterminated quoted field starting near line " + std::to_string(rec.line));
  }
  end_record();
  return out;
}

inline TabularDataset load_csv(std::istream& in, const Schema& schema, const std::string& origin = "<stream>") {
  schema.validate();
  auto records = parse_csv(in);
  if (records.empty()) {
    throw Error(ErrorKind::data, origin + ": missing header row");
  }
  const auto& header = records.front().cells;

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name(trim(header[i]));
    if (!position.emplace(name, i).second) {
      throw Error(ErrorKind::data, origin + ": duplicate header column '" + name + "'");
    }
  }
  const auto target = schema.target_index();
  TabularDataset ds;
  ds.schema = schema;
  ds.has_target = position.contains(schema.columns[target].name);

  const std::size_t expected_header = schema.columns.size() - (ds.has_target ? 0 : 1);
  std::vector<std::size_t> source_col(schema.columns.size(), header.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto it = position.find(schema.columns[c].name);
    if (it != position.end()) {
      source_col[c] = it->second;
    } else if (c != target) {
      throw Error(ErrorKind::data, origin + ": header is missing schema column '" + schema.columns[c].name + "'");
    }
  }
  if (header.size() != expected_header) {
    for (const auto& [name, idx] : position) {
      if (std::none_of(schema.columns.begin(), schema.columns.end(), [&](const Column& c) { return c.name == name; })) {
        throw Error(ErrorKind::data, origin + ": header column '" + name + "' is not in the schema");
      }
    }
  }

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.cells.size() != header.size()) {
      throw Error(ErrorKind::data, origin + ": ragged row " + std::to_string(r) + " (line " + std::to_string(rec.line) +
                                       "): expected " + std::to_string(header.size()) + " cells, got " +
                                       std::to_string(rec.cells.size()));
    }
    std::vector<std::string> row(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      row[c] = source_col[c] < header.size() ? rec.cells[source_col[c]] : schema.missing_token;
    }
    ds.rows.push_back(std::move(row));
    ds.source_rows.push_back(r - 1);
  }

  if (ds.has_target && !ds.rows.empty()) {
    const bool seen = std::any_of(ds.rows.begin(), ds.rows.end(),
                                  [&](const auto& row) { return trim(row[target]) == schema.positive_label; });
    if (!seen) {
      throw Error(ErrorKind::data, origin + ": positive_label '" + schema.positive_label + "' never occurs in target column");
    }
  }
  return ds;
}

inline TabularDataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::data, "cannot open data file: " + path);
  }
  return load_csv(in, schema, path);
}

/// 0/1 labels derived from the target column; data error on a missing target.
inline std::vector<int> labels_of(const TabularDataset& ds) {
  std::vector<int> y(ds.n_rows(), 0);
  if (!ds.has_target) return y;
  const auto t = ds.schema.target_index();
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    const auto v = trim(ds.rows[r][t]);
    if (v == ds.schema.missing_token || v.empty()) {
      throw Error(ErrorKind::data, "missing target value at data row " + std::to_string(ds.source_rows[r]));
    }
    y[r] = v == ds.schema.positive_label ? 1 : 0;
  }
  return y;
}

inline TabularDataset subset(const TabularDataset& ds, const std::vector<std::size_t>& indices) {
  TabularDataset out;
  out.schema = ds.schema;
  out.has_target = ds.has_target;
  out.rows.reserve(indices.size());
  out.source_rows.reserve(indices.size());
  for (auto i : indices) {
    out.rows.push_back(ds.rows[i]);
    out.source_rows.push_back(ds.source_rows[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// Per-class random partition; test takes round(class_count * test_fraction)
/// rows of each class. Both parts keep the input's relative row order.
inline std::pair<TabularDataset, TabularDataset> stratified_split(const TabularDataset& ds, double test_fraction,
                                                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::config, "test_fraction must lie in (0,1)");
  }
  if (!ds.has_target) {
    throw Error(ErrorKind::data, "stratified_split requires a target column");
  }
  const auto y = labels_of(ds);
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  if (by_class[0].empty() || by_class[1].empty()) {
    throw Error(ErrorKind::data, "stratified_split: dataset contains a single class");
  }

  std::mt19937_64 rng(seed);
  std::vector<char> in_test(y.size(), 0);
  for (auto& members : by_class) {
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * test_fraction));
    if (k == 0 || k >= members.size()) {
      throw Error(ErrorKind::data, "stratified_split: test_fraction leaves a class empty on one side");
    }
    seeded_shuffle(members, rng);
    for (std::size_t j = 0; j < k; ++j) in_test[members[j]] = 1;
  }

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t i = 0; i < y.size(); ++i) (in_test[i] ? test_idx : train_idx).push_back(i);
  return {subset(ds, train_idx), subset(ds, test_idx)};
}

/// Fold id in [0, k) for every row, dealt round-robin over each shuffled class.
inline std::vector<std::size_t> stratified_kfold(const TabularDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::config, "stratified_kfold needs k >= 2");
  const auto y = labels_of(ds);
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  if (by_class[0].size() < k || by_class[1].size() < k) {
    throw Error(ErrorKind::data, "stratified_kfold: each class needs at least k rows");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> fold(y.size(), 0);
  for (auto& members : by_class) {
    seeded_shuffle(members, rng);
    for (std::size_t j = 0; j < members.size(); ++j) fold[members[j]] = j % k;
  }
  return fold;
}

inline std::pair<TabularDataset, TabularDataset> fold_partition(const TabularDataset& ds,
                                                                const std::vector<std::size_t>& fold,
                                                                std::size_t held_out) {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == held_out ? test_idx : train_idx).push_back(i);
  return {subset(ds, train_idx), subset(ds, test_idx)};
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct ColumnTransform {
  std::size_t column = 0;  // index into schema.columns
  ColumnKind kind = ColumnKind::numeric;
  // numeric / binary
  double impute_value = 0.0;
  double mean = 0.0;
  double std = 1.0;
  // categorical: value -> index, indices 1..m; 0 is out-of-vocabulary/missing
  std::map<std::string, std::size_t> vocab;

  std::size_t vocab_size() const { return vocab.size() + 1; }
  bool operator==(const ColumnTransform&) const = default;
};

struct FittedTransform {
  Schema schema;
  EncodingMode encoding = EncodingMode::one_hot;
  std::vector<ColumnTransform> columns;  // feature columns in schema order

  bool operator==(const FittedTransform&) const = default;

  std::size_t dense_width() const {
    std::size_t w = 0;
    for (const auto& c : columns) {
      if (c.kind == ColumnKind::categorical) {
        if (encoding == EncodingMode::one_hot) w += c.vocab.size();
      } else {
        ++w;
      }
    }
    return w;
  }

  std::vector<std::size_t> vocab_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& c : columns) {
      if (c.kind == ColumnKind::categorical) out.push_back(c.vocab_size());
    }
    return out;
  }

  /// Names of the dense columns; one-hot entries read `column=value`.
  std::vector<std::string> dense_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns) {
      const auto& name = schema.columns[c.column].name;
      if (c.kind != ColumnKind::categorical) {
        out.push_back(name);
      } else if (encoding == EncodingMode::one_hot) {
        std::vector<std::string> ordered(c.vocab.size());
        for (const auto& [value, idx] : c.vocab) ordered[idx - 1] = value;
        for (const auto& value : ordered) out.push_back(name + "=" + value);
      }
    }
    return out;
  }
};

inline void to_json(json& j, const ColumnTransform& c) {
  j = json{{"column", c.column}, {"kind", to_string(c.kind)}};
  if (c.kind == ColumnKind::categorical) {
    json vocab = json::array();
    std::vector<std::string> ordered(c.vocab.size());
    for (const auto& [value, idx] : c.vocab) ordered[idx - 1] = value;
    for (const auto& v : ordered) vocab.push_back(v);
    j["vocab"] = vocab;
  } else {
    j["impute_value"] = c.impute_value;
    j["mean"] = c.mean;
    j["std"] = c.std;
  }
}

inline void from_json(const json& j, ColumnTransform& c) {
  c.column = j.at("column").get<std::size_t>();
  c.kind = parse_column_kind(j.at("kind").get<std::string>());
  c.vocab.clear();
  if (c.kind == ColumnKind::categorical) {
    std::size_t idx = 1;
    for (const auto& v : j.at("vocab")) c.vocab.emplace(v.get<std::string>(), idx++);
  } else {
    c.impute_value = j.at("impute_value").get<double>();
    c.mean = j.at("mean").get<double>();
    c.std = j.at("std").get<double>();
  }
}

inline void to_json(json& j, const FittedTransform& t) {
  j = json{{"schema", t.schema}, {"encoding_mode", to_string(t.encoding)}, {"columns", t.columns}};
}

inline void from_json(const json& j, FittedTransform& t) {
  t.schema = j.at("schema").get<Schema>();
  t.encoding = parse_encoding_mode(j.at("encoding_mode").get<std::string>());
  t.columns = j.at("columns").get<std::vector<ColumnTransform>>();
}

/// Label-encoded categorical fields, n_rows x n_fields, row-major.
struct IndexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> data;

  std::span<const std::size_t> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool operator==(const IndexMatrix&) const = default;
};

struct DesignMatrix {
  Matrix dense;
  IndexMatrix cat_indices;
  std::vector<std::size_t> vocab_sizes;  // per categorical field, including OOV
  std::vector<int> labels;
  std::vector<std::string> dense_names;

  std::size_t n_rows() const noexcept { return dense.rows(); }
  bool operator==(const DesignMatrix&) const = default;
};

namespace detail {

inline bool is_missing(std::string_view cell, const Schema& schema) {
  const auto v = trim(cell);
  return v.empty() || v == schema.missing_token;
}

inline double parse_numeric_cell(std::string_view cell, const std::string& column, std::size_t source_row) {
  const auto v = parse_double(cell);
  if (!v || !std::isfinite(*v)) {
    throw Error(ErrorKind::data, "column '" + column + "' data row " + std::to_string(source_row) +
                                     ": not a finite number: '" + std::string(cell) + "'");
  }
  return *v;
}

inline double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace detail

inline DesignMatrix apply_transform(const FittedTransform& ft, const TabularDataset& ds);

/// Fits imputation, scaling and vocabulary statistics on `train` only.
inline std::pair<FittedTransform, DesignMatrix> fit_transform(const TabularDataset& train,
                                                              EncodingMode encoding = EncodingMode::one_hot) {
  if (train.n_rows() == 0) {
    throw Error(ErrorKind::data, "fit_transform: empty training set");
  }
  const auto& schema = train.schema;
  FittedTransform ft;
  ft.schema = schema;
  ft.encoding = encoding;

  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& col = schema.columns[c];
    if (col.kind == ColumnKind::target || col.kind == ColumnKind::ignore) continue;
    ColumnTransform t;
    t.column = c;
    t.kind = col.kind;

    if (col.kind == ColumnKind::categorical) {
      std::set<std::string> seen;
      for (const auto& row : train.rows) {
        if (!detail::is_missing(row[c], schema)) seen.emplace(trim(row[c]));
      }
      std::size_t idx = 1;
      for (const auto& v : seen) t.vocab.emplace(v, idx++);
    } else {
      std::vector<double> present;
      for (std::size_t r = 0; r < train.n_rows(); ++r) {
        const auto& cell = train.rows[r][c];
        if (detail::is_missing(cell, schema)) continue;
        const double v = detail::parse_numeric_cell(cell, col.name, train.source_rows[r]);
        if (col.kind == ColumnKind::binary && v != 0.0 && v != 1.0) {
          throw Error(ErrorKind::data, "binary column '" + col.name + "' holds a value other than 0/1");
        }
        present.push_back(v);
      }
      if (present.empty()) {
        throw Error(ErrorKind::data, "column '" + col.name + "' has no non-missing values in the training set");
      }
      t.impute_value = detail::median_of(present);
      if (col.kind == ColumnKind::numeric) {
        const auto n = static_cast<double>(train.n_rows());
        const auto missing = train.n_rows() - present.size();
        double sum = static_cast<double>(missing) * t.impute_value;
        for (double v : present) sum += v;
        t.mean = sum / n;
        double ss = static_cast<double>(missing) * (t.impute_value - t.mean) * (t.impute_value - t.mean);
        for (double v : present) ss += (v - t.mean) * (v - t.mean);
        const bool constant = missing == 0 ? std::all_of(present.begin(), present.end(),
                                                         [&](double v) { return v == present.front(); })
                                           : std::all_of(present.begin(), present.end(),
                                                         [&](double v) { return v == t.impute_value; });
        t.std = constant ? 1.0 : std::sqrt(ss / n);
        if (constant) t.mean = missing == 0 ? present.front() : t.impute_value;
      }
    }
    ft.columns.push_back(std::move(t));
  }

  auto dm = apply_transform(ft, train);
  return {std::move(ft), std::move(dm)};
}

/// Applies train-fitted statistics; unseen categories map to index 0 and an
/// all-zero one-hot block.
inline DesignMatrix apply_transform(const FittedTransform& ft, const TabularDataset& ds) {
  if (!(ds.schema == ft.schema)) {
    throw Error(ErrorKind::data, "apply_transform: dataset schema differs from the fitted schema");
  }
  const auto& schema = ft.schema;
  DesignMatrix dm;
  dm.vocab_sizes = ft.vocab_sizes();
  dm.dense_names = ft.dense_names();
  dm.dense = Matrix(ds.n_rows(), ft.dense_width());
  dm.cat_indices.rows = ds.n_rows();
  dm.cat_indices.cols = dm.vocab_sizes.size();
  dm.cat_indices.data.assign(ds.n_rows() * dm.cat_indices.cols, 0);
  dm.labels = labels_of(ds);

  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    const auto& row = ds.rows[r];
    std::size_t d = 0;
    std::size_t f = 0;
    for (const auto& t : ft.columns) {
      const auto& cell = row[t.column];
      if (t.kind == ColumnKind::categorical) {
        std::size_t idx = 0;
        if (!detail::is_missing(cell, schema)) {
          const auto it = t.vocab.find(std::string(trim(cell)));
          if (it != t.vocab.end()) idx = it->second;
        }
        dm.cat_indices.data[r * dm.cat_indices.cols + f++] = idx;
        if (ft.encoding == EncodingMode::one_hot) {
          if (idx > 0) dm.dense(r, d + idx - 1) = 1.0;
          d += t.vocab.size();
        }
      } else {
        const double raw = detail::is_missing(cell, schema)
                               ? t.impute_value
                               : detail::parse_numeric_cell(cell, schema.columns[t.column].name, ds.source_rows[r]);
        dm.dense(r, d++) = t.kind == ColumnKind::numeric ? (raw - t.mean) / t.std : raw;
      }
    }
  }
  return dm;
}

}  // namespace tabblend::dataset
