#pragma once

// Convex blending of two probability vectors with the coefficient chosen by
// exhaustive grid search on validation AUC.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabblend/common.hpp"
#include "tabblend/metrics.hpp"

namespace tabblend::ensemble {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

struct BlendConfig {
  double grid_step = 0.01;

  void validate() const {
    if (!(grid_step > 0.0 && grid_step <= 0.5)) throw Error(ErrorKind::config, "blend: grid_step must lie in (0, 0.5]");
  }
};

struct GridPoint {
  double alpha = 0.0;
  double auc = 0.0;
  bool operator==(const GridPoint&) const = default;
};

struct SearchResult {
  double alpha = 0.0;
  std::vector<GridPoint> record;
};

struct EnsembleModel {
  double alpha = 0.0;
  std::string gbdt_path;
  std::string xdeepfm_path;
  std::vector<GridPoint> search_record;
};

/// {0, step, 2*step, ...} capped with an exact 1.
inline std::vector<double> alpha_grid(const BlendConfig& cfg) {
  cfg.validate();
  std::vector<double> grid;
  for (std::size_t i = 0;; ++i) {
    const double a = static_cast<double>(i) * cfg.grid_step;
    // Values within rounding of 1 collapse onto the endpoint.
    if (a >= 1.0 - 1e-9) break;
    grid.push_back(a);
  }
  grid.push_back(1.0);
  return grid;
}

/// alpha * p_gbdt + (1 - alpha) * p_xdfm, elementwise.
inline std::vector<double> blend(std::span<const double> p_gbdt, std::span<const double> p_xdfm, double alpha) {
  if (p_gbdt.size() != p_xdfm.size()) throw Error(ErrorKind::data, "blend: prediction lengths differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::config, "blend: alpha must lie in [0,1]");
  std::vector<double> out(p_gbdt.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(alpha * p_gbdt[i] + (1.0 - alpha) * p_xdfm[i], 0.0, 1.0);
  }
  return out;
}

/// Scores every grid alpha by AUC on (y_val, blend); the smallest alpha among
/// exact AUC ties wins.
inline SearchResult grid_search_alpha(std::span<const int> y_val, std::span<const double> p_gbdt,
                                      std::span<const double> p_xdfm, const BlendConfig& cfg = {}) {
  SearchResult res;
  bool have_best = false;
  double best_auc = 0.0;
  for (double a : alpha_grid(cfg)) {
    const double score = metrics::auc(y_val, blend(p_gbdt, p_xdfm, a));
    res.record.push_back({a, score});
    if (!have_best || score > best_auc) {
      best_auc = score;
      res.alpha = a;
      have_best = true;
    }
  }
  return res;
}

inline json model_to_json(const EnsembleModel& m) {
  json record = json::array();
  for (const auto& g : m.search_record) record.push_back({{"alpha", g.alpha}, {"auc", g.auc}});
  return json{{"format_version", kFormatVersion},
              {"kind", "ensemble"},
              {"alpha", m.alpha},
              {"components", {{"gbdt", m.gbdt_path}, {"xdeepfm", m.xdeepfm_path}}},
              {"search_record", record}};
}

inline EnsembleModel model_from_json(const json& j) {
  if (j.value("kind", std::string{}) != "ensemble") throw Error(ErrorKind::model, "not an ensemble model file");
  if (j.at("format_version").get<int>() != kFormatVersion) {
    throw Error(ErrorKind::model, "unsupported ensemble format_version " + j.at("format_version").dump());
  }
  EnsembleModel m;
  m.alpha = j.at("alpha").get<double>();
  m.gbdt_path = j.at("components").at("gbdt").get<std::string>();
  m.xdeepfm_path = j.at("components").at("xdeepfm").get<std::string>();
  for (const auto& g : j.at("search_record")) m.search_record.push_back({g.at("alpha").get<double>(), g.at("auc").get<double>()});
  if (!(m.alpha >= 0.0 && m.alpha <= 1.0)) throw Error(ErrorKind::model, "ensemble alpha outside [0,1]");
  return m;
}

}  // namespace tabblend::ensemble
