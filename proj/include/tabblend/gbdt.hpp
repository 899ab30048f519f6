#pragma once

// Newton boosting of regression trees on the logistic loss with L1/L2
// penalties on leaf weights and exact greedy split search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabblend/common.hpp"
#include "tabblend/dataset.hpp"
#include "tabblend/metrics.hpp"

namespace tabblend::gbdt {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

struct GBDTConfig {
  std::size_t n_trees = 200;
  std::size_t max_depth = 4;
  double learning_rate = 0.1;
  double lambda1 = 0.0;
  double lambda2 = 1.0;
  double gamma = 0.0;
  double min_child_hessian = 1.0;
  std::optional<double> base_score;  // unset: training positive rate
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error(ErrorKind::config, "gbdt: learning_rate must lie in (0,1]");
    if (!(lambda1 >= 0.0)) throw Error(ErrorKind::config, "gbdt: lambda1 must be >= 0");
    if (!(lambda2 >= 0.0)) throw Error(ErrorKind::config, "gbdt: lambda2 must be >= 0");
    if (!(gamma >= 0.0)) throw Error(ErrorKind::config, "gbdt: gamma must be >= 0");
    if (!(min_child_hessian >= 0.0)) throw Error(ErrorKind::config, "gbdt: min_child_hessian must be >= 0");
    if (base_score && !(*base_score > 0.0 && *base_score < 1.0)) {
      throw Error(ErrorKind::config, "gbdt: base_score must lie strictly inside (0,1)");
    }
  }

  bool operator==(const GBDTConfig&) const = default;
};

struct Node {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;  // rows with x < threshold go left
  std::size_t left = 0;
  std::size_t right = 0;
  double gain = 0.0;
  double weight = 0.0;

  bool operator==(const Node&) const = default;
};

struct RegTree {
  std::vector<Node> nodes;  // nodes[0] is the root

  std::size_t n_leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.leaf; }));
  }

  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].leaf) {
      i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
    }
    return nodes[i].weight;
  }

  bool operator==(const RegTree&) const = default;
};

struct GBDTModel {
  GBDTConfig config;
  double base_score = 0.5;
  std::vector<RegTree> trees;
  std::vector<std::string> feature_names;

  bool operator==(const GBDTModel&) const = default;
};

struct Derivatives {
  double g = 0.0;
  double h = 0.0;
};

/// First and second derivative of per-example BCE with respect to the logit.
inline Derivatives grad_hess(int y, double p) {
  const double q = clip_prob(p);
  return {q - static_cast<double>(y), q * (1.0 - q)};
}

inline double soft_threshold(double g, double lambda1) {
  const double mag = std::max(std::abs(g) - lambda1, 0.0);
  return g < 0 ? -mag : mag;
}

/// argmin_w  G*w + (H+lambda2)/2 * w^2 + lambda1*|w|
inline double leaf_weight(double G, double H, double lambda1, double lambda2) {
  if (!(H + lambda2 > 0.0)) {
    throw Error(ErrorKind::training, "leaf_weight: H + lambda2 must be positive");
  }
  const double t = soft_threshold(G, lambda1);
  return t == 0.0 ? 0.0 : -t / (H + lambda2);
}

/// Reduction of the penalized objective from splitting a node, minus gamma.
/// With lambda1 > 0 the gradient sums are soft-thresholded, matching the
/// objective minimized by leaf_weight; lambda1 = 0 gives the plain form.
inline double split_gain(double GL, double HL, double GR, double HR, double lambda2, double gamma,
                         double lambda1 = 0.0) {
  const double dl = HL + lambda2;
  const double dr = HR + lambda2;
  const double dp = HL + HR + lambda2;
  if (!(dl > 0.0 && dr > 0.0 && dp > 0.0)) {
    throw Error(ErrorKind::training, "split_gain: non-positive denominator");
  }
  const double tl = soft_threshold(GL, lambda1);
  const double tr = soft_threshold(GR, lambda1);
  const double tp = soft_threshold(GL + GR, lambda1);
  return 0.5 * (tl * tl / dl + tr * tr / dr - tp * tp / dp) - gamma;
}

/// Split threshold strictly between two consecutive distinct values, so that
/// `lo` routes left and `hi` routes right.
inline double midpoint(double lo, double hi) {
  const double m = lo + (hi - lo) * 0.5;
  return m > lo ? m : hi;
}

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> g, std::span<const double> h, const GBDTConfig& cfg,
              const std::vector<std::vector<std::size_t>>& sorted)
      : x_(x), g_(g), h_(h), cfg_(cfg), sorted_(sorted), member_(x.rows(), 0) {}

  RegTree build() {
    std::vector<std::size_t> all(x_.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(all, 0);
    return std::move(tree_);
  }

 private:
  struct Candidate {
    double gain = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
  };

  std::size_t grow(const std::vector<std::size_t>& rows, std::size_t depth) {
    double G = 0.0;
    double H = 0.0;
    for (auto r : rows) {
      G += g_[r];
      H += h_[r];
    }
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.push_back(Node{});

    std::optional<Candidate> best;
    if (depth < cfg_.max_depth && rows.size() > 1) best = find_split(rows, G, H);

    if (!best) {
      tree_.nodes[id].weight = leaf_weight(G, H, cfg_.lambda1, cfg_.lambda2);
      return id;
    }

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto r : rows) (x_(r, best->feature) < best->threshold ? left : right).push_back(r);

    const auto l = grow(left, depth + 1);
    const auto rr = grow(right, depth + 1);
    auto& node = tree_.nodes[id];
    node.leaf = false;
    node.feature = best->feature;
    node.threshold = best->threshold;
    node.gain = best->gain;
    node.left = l;
    node.right = rr;
    return id;
  }

  std::optional<Candidate> find_split(const std::vector<std::size_t>& rows, double G, double H) {
    for (auto r : rows) member_[r] = 1;
    std::optional<Candidate> best;
    double best_gain = 0.0;
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      double GL = 0.0;
      double HL = 0.0;
      bool have_prev = false;
      double prev = 0.0;
      for (auto r : sorted_[f]) {
        if (!member_[r]) continue;
        const double v = x_(r, f);
        if (have_prev && v > prev) {
          const double HR = H - HL;
          if (HL >= cfg_.min_child_hessian && HR >= cfg_.min_child_hessian) {
            const double gain = split_gain(GL, HL, G - GL, HR, cfg_.lambda2, cfg_.gamma, cfg_.lambda1);
            if (gain > best_gain) {
              best_gain = gain;
              best = Candidate{gain, f, midpoint(prev, v)};
            }
          }
        }
        GL += g_[r];
        HL += h_[r];
        prev = v;
        have_prev = true;
      }
    }
    for (auto r : rows) member_[r] = 0;
    return best;
  }

  const Matrix& x_;
  std::span<const double> g_;
  std::span<const double> h_;
  const GBDTConfig& cfg_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  std::vector<char> member_;
  RegTree tree_;
};

inline std::vector<std::vector<std::size_t>> presort(const Matrix& x) {
  std::vector<std::vector<std::size_t>> sorted(x.cols(), std::vector<std::size_t>(x.rows()));
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& idx = sorted[f];
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
  }
  return sorted;
}

inline RegTree build_tree_presorted(const Matrix& x, std::span<const double> g, std::span<const double> h,
                                    const GBDTConfig& cfg, const std::vector<std::vector<std::size_t>>& sorted) {
  if (x.rows() == 0) throw Error(ErrorKind::training, "build_tree: empty input");
  if (g.size() != x.rows() || h.size() != x.rows()) {
    throw Error(ErrorKind::training, "build_tree: gradient/hessian length differs from row count");
  }
  return TreeBuilder(x, g, h, cfg, sorted).build();
}

}  // namespace detail

/// Greedy exact regression tree: at each node every (feature, midpoint) pair is
/// scored with split_gain; ties go to the lowest feature, then lowest threshold.
inline RegTree build_tree(const Matrix& dense, std::span<const double> g, std::span<const double> h,
                          const GBDTConfig& cfg) {
  return detail::build_tree_presorted(dense, g, h, cfg, detail::presort(dense));
}

inline double raw_score(const GBDTModel& m, std::span<const double> x) {
  double z = logit(m.base_score);
  for (const auto& t : m.trees) z += m.config.learning_rate * t.predict(x);
  return z;
}

inline std::vector<double> predict_gbdt(const GBDTModel& m, const Matrix& dense) {
  if (dense.cols() != m.feature_names.size()) {
    throw Error(ErrorKind::data, "predict_gbdt: expected " + std::to_string(m.feature_names.size()) +
                                     " features, got " + std::to_string(dense.cols()));
  }
  std::vector<double> p(dense.rows());
  for (std::size_t r = 0; r < dense.rows(); ++r) p[r] = open_unit(sigmoid(raw_score(m, dense.row(r))));
  return p;
}

/// Boosts `cfg.n_trees` rounds. `bce_trace`, when given, receives training BCE
/// before the first round and after every round.
inline GBDTModel train_gbdt(const dataset::DesignMatrix& dm, const GBDTConfig& cfg,
                            std::vector<double>* bce_trace = nullptr) {
  cfg.validate();
  const auto n = dm.n_rows();
  if (n == 0) throw Error(ErrorKind::training, "train_gbdt: empty design matrix");
  const auto positives = static_cast<std::size_t>(std::count(dm.labels.begin(), dm.labels.end(), 1));
  if (positives == 0 || positives == n) throw Error(ErrorKind::training, "train_gbdt: both classes must be present");

  GBDTModel model;
  model.config = cfg;
  model.base_score = cfg.base_score.value_or(static_cast<double>(positives) / static_cast<double>(n));
  model.feature_names = dm.dense_names;
  if (model.feature_names.size() != dm.dense.cols()) {
    model.feature_names.clear();
    for (std::size_t f = 0; f < dm.dense.cols(); ++f) model.feature_names.push_back("f" + std::to_string(f));
  }

  const auto sorted = detail::presort(dm.dense);
  std::vector<double> z(n, logit(model.base_score));
  std::vector<double> p(n);
  std::vector<double> g(n);
  std::vector<double> h(n);
  auto refresh = [&] {
    for (std::size_t i = 0; i < n; ++i) p[i] = sigmoid(z[i]);
  };
  refresh();
  if (bce_trace) bce_trace->push_back(metrics::bce(dm.labels, p));

  for (std::size_t round = 0; round < cfg.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = grad_hess(dm.labels[i], p[i]);
      g[i] = d.g;
      h[i] = d.h;
    }
    auto tree = detail::build_tree_presorted(dm.dense, g, h, cfg, sorted);
    if (tree.nodes.size() == 1 && tree.nodes[0].weight == 0.0) break;  // fixed point
    for (std::size_t i = 0; i < n; ++i) z[i] += cfg.learning_rate * tree.predict(dm.dense.row(i));
    for (const auto& node : tree.nodes) {
      if (!std::isfinite(node.weight)) throw Error(ErrorKind::training, "train_gbdt: non-finite leaf weight");
    }
    model.trees.push_back(std::move(tree));
    refresh();
    if (bce_trace) bce_trace->push_back(metrics::bce(dm.labels, p));
  }
  return model;
}

/// Total split gain per feature, normalized to sum to one (all zero when the
/// model has no splits).
inline std::vector<double> feature_importance(const GBDTModel& m) {
  std::vector<double> imp(m.feature_names.size(), 0.0);
  for (const auto& t : m.trees) {
    for (const auto& n : t.nodes) {
      if (!n.leaf) imp.at(n.feature) += n.gain;
    }
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : imp) v /= total;
  }
  return imp;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void to_json(json& j, const GBDTConfig& c) {
  j = json{{"n_trees", c.n_trees},
           {"max_depth", c.max_depth},
           {"learning_rate", c.learning_rate},
           {"lambda1", c.lambda1},
           {"lambda2", c.lambda2},
           {"gamma", c.gamma},
           {"min_child_hessian", c.min_child_hessian},
           {"base_score", c.base_score ? json(*c.base_score) : json(nullptr)},
           {"seed", c.seed}};
}

inline void from_json(const json& j, GBDTConfig& c) {
  c.n_trees = j.at("n_trees").get<std::size_t>();
  c.max_depth = j.at("max_depth").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.min_child_hessian = j.at("min_child_hessian").get<double>();
  c.base_score = j.at("base_score").is_null() ? std::nullopt : std::optional<double>(j.at("base_score").get<double>());
  c.seed = j.at("seed").get<std::uint64_t>();
}

namespace detail {

inline json node_to_json(const RegTree& t, std::size_t i) {
  const auto& n = t.nodes[i];
  if (n.leaf) return json{{"weight", n.weight}};
  return json{{"feature", n.feature},
              {"threshold", n.threshold},
              {"gain", n.gain},
              {"left", node_to_json(t, n.left)},
              {"right", node_to_json(t, n.right)}};
}

inline std::size_t node_from_json(const json& j, RegTree& t) {
  const std::size_t id = t.nodes.size();
  t.nodes.push_back(Node{});
  if (j.contains("weight")) {
    t.nodes[id].weight = j.at("weight").get<double>();
    return id;
  }
  Node n;
  n.leaf = false;
  n.feature = j.at("feature").get<std::size_t>();
  n.threshold = j.at("threshold").get<double>();
  n.gain = j.at("gain").get<double>();
  n.left = node_from_json(j.at("left"), t);
  n.right = node_from_json(j.at("right"), t);
  t.nodes[id] = n;
  return id;
}

}  // namespace detail

inline json model_to_json(const GBDTModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees) trees.push_back(detail::node_to_json(t, 0));
  return json{{"format_version", kFormatVersion},
              {"kind", "gbdt"},
              {"config", m.config},
              {"base_score", m.base_score},
              {"feature_names", m.feature_names},
              {"trees", trees}};
}

inline GBDTModel model_from_json(const json& j) {
  if (j.value("kind", std::string{}) != "gbdt") throw Error(ErrorKind::model, "not a gbdt model file");
  if (j.at("format_version").get<int>() != kFormatVersion) {
    throw Error(ErrorKind::model, "unsupported gbdt format_version " + j.at("format_version").dump());
  }
  GBDTModel m;
  m.config = j.at("config").get<GBDTConfig>();
  m.base_score = j.at("base_score").get<double>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& tj : j.at("trees")) {
    RegTree t;
    detail::node_from_json(tj, t);
    for (const auto& n : t.nodes) {
      if (!n.leaf && n.feature >= m.feature_names.size()) throw Error(ErrorKind::model, "gbdt tree references unknown feature");
    }
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace tabblend::gbdt
