#pragma once

// Embedding + stacking + cross network + deep network classifier with a
// hand-written reverse pass and Adam training on mean binary cross-entropy.
//
// Per example, with h0 the stacked input [E_1[i_1] | ... | E_N[i_N] | dense]:
//   cross:  h_{l+1} = W_l h_l + b_l + (c_l . h_l) h0
//   deep:   a_{k+1} = act(A_k a_k + beta_k),  a_0 = h0
//   head:   p = sigmoid(w . [h_L | a_last] + bias)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabblend/common.hpp"
#include "tabblend/dataset.hpp"
#include "tabblend/metrics.hpp"

namespace tabblend::xdeepfm {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

enum class Activation { relu, sigmoid };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "sigmoid"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw Error(ErrorKind::config, "unknown activation: " + s);
}

struct XDeepFMConfig {
  std::size_t embedding_dim = 8;
  std::size_t cross_layers = 2;
  std::vector<std::size_t> deep_widths{64, 32};
  Activation activation = Activation::relu;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 256;
  std::size_t epochs = 30;
  double embedding_init = 0.05;  // half-width of the uniform init for embeddings and cross weights c
  std::uint64_t seed = 0;

  void validate() const {
    if (embedding_dim == 0) throw Error(ErrorKind::config, "xdeepfm: embedding_dim must be >= 1");
    if (batch_size == 0) throw Error(ErrorKind::config, "xdeepfm: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::config, "xdeepfm: learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorKind::config, "xdeepfm: Adam betas must lie in [0,1)");
    }
    if (!(epsilon > 0.0)) throw Error(ErrorKind::config, "xdeepfm: epsilon must be positive");
    for (auto w : deep_widths) {
      if (w == 0) throw Error(ErrorKind::config, "xdeepfm: deep layer widths must be >= 1");
    }
  }

  bool operator==(const XDeepFMConfig&) const = default;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<Matrix> fields;  // fields[f] is M_f x K; row 0 is the OOV row

  bool operator==(const EmbeddingTable&) const = default;
};

struct CrossLayer {
  Matrix W;  // width x width
  std::vector<double> b;
  std::vector<double> c;

  bool operator==(const CrossLayer&) const = default;
};

struct DenseLayer {
  Matrix W;  // out x in
  std::vector<double> b;
  Activation activation = Activation::relu;

  bool operator==(const DenseLayer&) const = default;
};

struct DeepNet {
  std::vector<DenseLayer> layers;

  bool operator==(const DeepNet&) const = default;
};

/// Every trainable tensor. Gradients and Adam moments share this shape.
struct Params {
  EmbeddingTable embeddings;
  std::vector<CrossLayer> cross;
  DeepNet deep;
  std::vector<double> head_w;
  double head_b = 0.0;

  bool operator==(const Params&) const = default;
};

struct XDeepFMModel {
  XDeepFMConfig config;
  std::size_t dense_dim = 0;
  Params params;

  std::size_t n_fields() const { return params.embeddings.fields.size(); }
  std::size_t stack_width() const { return params.embeddings.dim * n_fields() + dense_dim; }

  bool operator==(const XDeepFMModel&) const = default;
};

/// Fixed-order view over every tensor of a parameter set.
template <typename P>
auto tensors(P& p) {
  using Span = std::conditional_t<std::is_const_v<P>, std::span<const double>, std::span<double>>;
  std::vector<Span> out;
  for (auto& m : p.embeddings.fields) out.emplace_back(m.data());
  for (auto& l : p.cross) {
    out.emplace_back(l.W.data());
    out.emplace_back(l.b);
    out.emplace_back(l.c);
  }
  for (auto& l : p.deep.layers) {
    out.emplace_back(l.W.data());
    out.emplace_back(l.b);
  }
  out.emplace_back(p.head_w);
  out.emplace_back(&p.head_b, std::size_t{1});
  return out;
}

/// Same shapes as `p`, every entry zero.
inline Params zeros_like(const Params& p) {
  Params z = p;
  for (auto t : tensors(z)) std::fill(t.begin(), t.end(), 0.0);
  return z;
}

inline std::size_t parameter_count(const Params& p) {
  std::size_t n = 0;
  for (auto t : tensors(p)) n += t.size();
  return n;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

inline double activate(Activation a, double z) { return a == Activation::relu ? std::max(z, 0.0) : sigmoid(z); }

// Derivative expressed through the activation output.
inline double activate_grad(Activation a, double z, double out) {
  return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : out * (1.0 - out);
}

inline std::vector<double> embed_stack(std::span<const std::size_t> row_cats, std::span<const double> row_dense,
                                       const EmbeddingTable& emb) {
  if (row_cats.size() != emb.fields.size()) {
    throw Error(ErrorKind::data, "embed_stack: expected " + std::to_string(emb.fields.size()) + " categorical fields");
  }
  std::vector<double> h0;
  h0.reserve(emb.dim * row_cats.size() + row_dense.size());
  for (std::size_t f = 0; f < row_cats.size(); ++f) {
    if (row_cats[f] >= emb.fields[f].rows()) {
      throw Error(ErrorKind::data, "embed_stack: index " + std::to_string(row_cats[f]) + " out of range for field " +
                                       std::to_string(f));
    }
    const auto r = emb.fields[f].row(row_cats[f]);
    h0.insert(h0.end(), r.begin(), r.end());
  }
  h0.insert(h0.end(), row_dense.begin(), row_dense.end());
  return h0;
}

namespace detail {

inline void affine(const Matrix& W, std::span<const double> b, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const auto w = W.row(i);
    double acc = b[i];
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
    out[i] = acc;
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Activations retained for the reverse pass.
struct Trace {
  std::vector<double> h0;
  std::vector<std::vector<double>> cross_h;  // h_0 .. h_L
  std::vector<double> cross_s;               // c_l . h_l
  std::vector<std::vector<double>> deep_z;   // pre-activations
  std::vector<std::vector<double>> deep_a;   // a_0 = h0 .. a_last
  double logit = 0.0;
};

inline void check_cross_width(const CrossLayer& l, std::size_t width) {
  if (l.W.rows() != width || l.W.cols() != width || l.b.size() != width || l.c.size() != width) {
    throw Error(ErrorKind::data, "cross layer width does not match input width " + std::to_string(width));
  }
}

inline void run_forward(const XDeepFMModel& m, std::span<const std::size_t> cats, std::span<const double> dense,
                        Trace& t) {
  const auto& p = m.params;
  if (dense.size() != m.dense_dim) {
    throw Error(ErrorKind::data, "xdeepfm: expected " + std::to_string(m.dense_dim) + " dense features, got " +
                                     std::to_string(dense.size()));
  }
  t.h0 = embed_stack(cats, dense, p.embeddings);
  const auto width = t.h0.size();

  t.cross_h.assign(1, t.h0);
  t.cross_s.clear();
  for (const auto& l : p.cross) {
    check_cross_width(l, width);
    const auto& h = t.cross_h.back();
    std::vector<double> next(width);
    affine(l.W, l.b, h, next);
    const double s = dot(l.c, h);
    for (std::size_t i = 0; i < width; ++i) next[i] += s * t.h0[i];
    t.cross_s.push_back(s);
    t.cross_h.push_back(std::move(next));
  }

  t.deep_a.assign(1, t.h0);
  t.deep_z.clear();
  for (const auto& l : p.deep.layers) {
    const auto& a = t.deep_a.back();
    if (l.W.cols() != a.size() || l.b.size() != l.W.rows()) {
      throw Error(ErrorKind::data, "deep layer input width mismatch");
    }
    std::vector<double> z(l.W.rows());
    affine(l.W, l.b, a, z);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = activate(l.activation, z[i]);
    t.deep_z.push_back(std::move(z));
    t.deep_a.push_back(std::move(out));
  }

  const auto& hc = t.cross_h.back();
  const auto& ad = t.deep_a.back();
  if (p.head_w.size() != hc.size() + ad.size()) {
    throw Error(ErrorKind::data, "xdeepfm: head width does not match cross + deep output width");
  }
  t.logit = p.head_b + dot(std::span(p.head_w).first(hc.size()), hc) + dot(std::span(p.head_w).subspan(hc.size()), ad);
}

}  // namespace detail

inline std::vector<double> cross_forward(const std::vector<CrossLayer>& layers, std::span<const double> h0) {
  std::vector<double> h(h0.begin(), h0.end());
  for (const auto& l : layers) {
    detail::check_cross_width(l, h0.size());
    std::vector<double> next(h.size());
    detail::affine(l.W, l.b, h, next);
    const double s = detail::dot(l.c, h);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += s * h0[i];
    h = std::move(next);
  }
  return h;
}

inline std::vector<double> deep_forward(const DeepNet& net, std::span<const double> h0) {
  std::vector<double> a(h0.begin(), h0.end());
  for (const auto& l : net.layers) {
    if (l.W.cols() != a.size() || l.b.size() != l.W.rows()) {
      throw Error(ErrorKind::data, "deep layer input width mismatch");
    }
    std::vector<double> z(l.W.rows());
    detail::affine(l.W, l.b, a, z);
    for (auto& v : z) v = activate(l.activation, v);
    a = std::move(z);
  }
  return a;
}

/// Probability for one example, pinned strictly inside (0,1).
inline double forward(const XDeepFMModel& m, std::span<const std::size_t> cats, std::span<const double> dense) {
  detail::Trace t;
  detail::run_forward(m, cats, dense, t);
  return open_unit(sigmoid(t.logit));
}

inline std::vector<double> predict(const XDeepFMModel& m, const dataset::DesignMatrix& dm) {
  std::vector<double> p(dm.n_rows());
  detail::Trace t;
  for (std::size_t r = 0; r < dm.n_rows(); ++r) {
    detail::run_forward(m, dm.cat_indices.row(r), dm.dense.row(r), t);
    p[r] = open_unit(sigmoid(t.logit));
  }
  return p;
}

/// Mean clipped BCE over the selected rows.
inline double batch_loss(const XDeepFMModel& m, const dataset::DesignMatrix& dm, std::span<const std::size_t> batch) {
  std::vector<int> y;
  std::vector<double> p;
  detail::Trace t;
  for (auto r : batch) {
    detail::run_forward(m, dm.cat_indices.row(r), dm.dense.row(r), t);
    y.push_back(dm.labels[r]);
    p.push_back(sigmoid(t.logit));
  }
  return metrics::bce(y, p);
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

struct BackwardResult {
  Params grad;
  double loss = 0.0;
};

/// Exact gradients of mean BCE over `batch` with respect to every parameter.
/// Embedding rows not referenced by the batch receive exactly zero.
inline BackwardResult backward(const XDeepFMModel& m, const dataset::DesignMatrix& dm,
                               std::span<const std::size_t> batch) {
  if (batch.empty()) throw Error(ErrorKind::training, "backward: empty batch");
  const auto& p = m.params;
  BackwardResult out{zeros_like(p), 0.0};
  auto& g = out.grad;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  detail::Trace t;
  std::vector<int> ys;
  std::vector<double> ps;
  for (auto r : batch) {
    const auto cats = dm.cat_indices.row(r);
    detail::run_forward(m, cats, dm.dense.row(r), t);
    const double prob = sigmoid(t.logit);
    ys.push_back(dm.labels[r]);
    ps.push_back(prob);
    const double dz = (prob - static_cast<double>(dm.labels[r])) * inv_n;

    const auto& hc = t.cross_h.back();
    const auto& ad = t.deep_a.back();
    const std::size_t width = t.h0.size();
    g.head_b += dz;
    for (std::size_t i = 0; i < hc.size(); ++i) g.head_w[i] += dz * hc[i];
    for (std::size_t i = 0; i < ad.size(); ++i) g.head_w[hc.size() + i] += dz * ad[i];

    std::vector<double> dh0(width, 0.0);

    // deep
    std::vector<double> da(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) da[i] = dz * p.head_w[hc.size() + i];
    for (std::size_t k = p.deep.layers.size(); k-- > 0;) {
      const auto& layer = p.deep.layers[k];
      auto& gl = g.deep.layers[k];
      const auto& z = t.deep_z[k];
      const auto& a_out = t.deep_a[k + 1];
      const auto& a_in = t.deep_a[k];
      std::vector<double> dpre(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) dpre[i] = da[i] * activate_grad(layer.activation, z[i], a_out[i]);
      std::vector<double> da_in(a_in.size(), 0.0);
      for (std::size_t i = 0; i < z.size(); ++i) {
        if (dpre[i] == 0.0) continue;
        gl.b[i] += dpre[i];
        auto gw = gl.W.row(i);
        const auto w = layer.W.row(i);
        for (std::size_t j = 0; j < a_in.size(); ++j) {
          gw[j] += dpre[i] * a_in[j];
          da_in[j] += w[j] * dpre[i];
        }
      }
      da = std::move(da_in);
    }
    for (std::size_t i = 0; i < width; ++i) dh0[i] += da[i];

    // cross
    std::vector<double> dh(width);
    for (std::size_t i = 0; i < width; ++i) dh[i] = dz * p.head_w[i];
    for (std::size_t l = p.cross.size(); l-- > 0;) {
      const auto& layer = p.cross[l];
      auto& gl = g.cross[l];
      const auto& h_in = t.cross_h[l];
      const double s = t.cross_s[l];
      const double ds = detail::dot(dh, t.h0);
      std::vector<double> dh_in(width, 0.0);
      for (std::size_t i = 0; i < width; ++i) {
        gl.b[i] += dh[i];
        gl.c[i] += ds * h_in[i];
        dh0[i] += s * dh[i];
        auto gw = gl.W.row(i);
        const auto w = layer.W.row(i);
        for (std::size_t j = 0; j < width; ++j) {
          gw[j] += dh[i] * h_in[j];
          dh_in[j] += w[j] * dh[i];
        }
      }
      for (std::size_t j = 0; j < width; ++j) dh_in[j] += ds * layer.c[j];
      dh = std::move(dh_in);
    }
    for (std::size_t i = 0; i < width; ++i) dh0[i] += dh[i];

    // embeddings
    const std::size_t K = p.embeddings.dim;
    for (std::size_t f = 0; f < cats.size(); ++f) {
      auto row = g.embeddings.fields[f].row(cats[f]);
      for (std::size_t k = 0; k < K; ++k) row[k] += dh0[f * K + k];
    }
  }
  out.loss = metrics::bce(ys, ps);
  return out;
}

// ---------------------------------------------------------------------------
// Initialization and training
// ---------------------------------------------------------------------------

/// Shapes from the design matrix; uniform embeddings, Glorot affine weights,
/// zero biases.
inline XDeepFMModel init_model(const XDeepFMConfig& cfg, const std::vector<std::size_t>& vocab_sizes,
                               std::size_t dense_dim) {
  cfg.validate();
  XDeepFMModel m;
  m.config = cfg;
  m.dense_dim = dense_dim;
  std::mt19937_64 rng(cfg.seed);
  auto fill_uniform = [&](std::span<double> v, double a) {
    for (auto& x : v) x = uniform_real(rng, -a, a);
  };
  auto glorot = [](std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  };

  auto& p = m.params;
  p.embeddings.dim = cfg.embedding_dim;
  for (auto mf : vocab_sizes) {
    Matrix e(mf, cfg.embedding_dim);
    fill_uniform(e.data(), cfg.embedding_init);
    p.embeddings.fields.push_back(std::move(e));
  }
  const std::size_t width = m.stack_width();
  if (width == 0) throw Error(ErrorKind::training, "xdeepfm: no input features");
  for (std::size_t l = 0; l < cfg.cross_layers; ++l) {
    CrossLayer layer{Matrix(width, width), std::vector<double>(width, 0.0), std::vector<double>(width)};
    fill_uniform(layer.W.data(), glorot(width, width));
    fill_uniform(layer.c, cfg.embedding_init);
    p.cross.push_back(std::move(layer));
  }
  std::size_t in = width;
  for (auto out : cfg.deep_widths) {
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), cfg.activation};
    fill_uniform(layer.W.data(), glorot(in, out));
    p.deep.layers.push_back(std::move(layer));
    in = out;
  }
  p.head_w.assign(width + in, 0.0);
  fill_uniform(p.head_w, glorot(width + in, 1));
  p.head_b = 0.0;
  return m;
}

class Adam {
 public:
  Adam(const XDeepFMConfig& cfg, const Params& like)
      : cfg_(cfg), m_(zeros_like(like)), v_(zeros_like(like)) {}

  void step(Params& params, const Params& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto ps = tensors(params);
    auto gs = tensors(grad);
    auto ms = tensors(m_);
    auto vs = tensors(v_);
    for (std::size_t k = 0; k < ps.size(); ++k) {
      for (std::size_t i = 0; i < ps[k].size(); ++i) {
        const double gi = gs[k][i];
        ms[k][i] = cfg_.beta1 * ms[k][i] + (1.0 - cfg_.beta1) * gi;
        vs[k][i] = cfg_.beta2 * vs[k][i] + (1.0 - cfg_.beta2) * gi * gi;
        ps[k][i] -= cfg_.learning_rate * (ms[k][i] / c1) / (std::sqrt(vs[k][i] / c2) + cfg_.epsilon);
      }
    }
  }

 private:
  XDeepFMConfig cfg_;
  Params m_;
  Params v_;
  std::uint64_t t_ = 0;
};

/// Shuffled mini-batch Adam for `cfg.epochs` epochs. `bce_trace`, when given,
/// receives full-training-set BCE at initialization and after each epoch.
inline XDeepFMModel train_xdeepfm(const dataset::DesignMatrix& dm, const XDeepFMConfig& cfg,
                                  std::vector<double>* bce_trace = nullptr) {
  cfg.validate();
  const auto n = dm.n_rows();
  const auto positives = static_cast<std::size_t>(std::count(dm.labels.begin(), dm.labels.end(), 1));
  if (n == 0 || positives == 0 || positives == n) {
    throw Error(ErrorKind::training, "train_xdeepfm: both classes must be present");
  }
  auto model = init_model(cfg, dm.vocab_sizes, dm.dense.cols());
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (bce_trace) bce_trace->push_back(batch_loss(model, dm, all));

  Adam opt(cfg, model.params);
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order = all;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    seeded_shuffle(order, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const auto len = std::min(cfg.batch_size, n - start);
      const auto res = backward(model, dm, std::span(order).subspan(start, len));
      if (!std::isfinite(res.loss)) throw Error(ErrorKind::training, "train_xdeepfm: loss diverged");
      opt.step(model.params, res.grad);
    }
    if (bce_trace) bce_trace->push_back(batch_loss(model, dm, all));
  }
  for (auto t : tensors(model.params)) {
    if (!std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); })) {
      throw Error(ErrorKind::training, "train_xdeepfm: non-finite parameter after training");
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace detail {

inline json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", m.data()}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != m.rows() * m.cols()) throw Error(ErrorKind::model, "matrix value count does not match shape");
  m.data() = std::move(values);
  return m;
}

}  // namespace detail

inline void to_json(json& j, const XDeepFMConfig& c) {
  j = json{{"embedding_dim", c.embedding_dim}, {"cross_layers", c.cross_layers},
           {"deep_widths", c.deep_widths},     {"activation", to_string(c.activation)},
           {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
           {"beta2", c.beta2},                 {"epsilon", c.epsilon},
           {"batch_size", c.batch_size},       {"epochs", c.epochs},
           {"embedding_init", c.embedding_init}, {"seed", c.seed}};
}

inline void from_json(const json& j, XDeepFMConfig& c) {
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.cross_layers = j.at("cross_layers").get<std::size_t>();
  c.deep_widths = j.at("deep_widths").get<std::vector<std::size_t>>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.embedding_init = j.at("embedding_init").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

inline json model_to_json(const XDeepFMModel& m) {
  const auto& p = m.params;
  json emb = json::array();
  for (const auto& e : p.embeddings.fields) emb.push_back(detail::matrix_to_json(e));
  json cross = json::array();
  for (const auto& l : p.cross) cross.push_back({{"W", detail::matrix_to_json(l.W)}, {"b", l.b}, {"c", l.c}});
  json deep = json::array();
  for (const auto& l : p.deep.layers) {
    deep.push_back({{"W", detail::matrix_to_json(l.W)}, {"b", l.b}, {"activation", to_string(l.activation)}});
  }
  return json{{"format_version", kFormatVersion},
              {"kind", "xdeepfm"},
              {"config", m.config},
              {"dense_dim", m.dense_dim},
              {"embedding_dim", p.embeddings.dim},
              {"embeddings", emb},
              {"cross_layers", cross},
              {"deep_layers", deep},
              {"head", {{"weights", p.head_w}, {"bias", p.head_b}}}};
}

inline XDeepFMModel model_from_json(const json& j) {
  if (j.value("kind", std::string{}) != "xdeepfm") throw Error(ErrorKind::model, "not an xdeepfm model file");
  if (j.at("format_version").get<int>() != kFormatVersion) {
    throw Error(ErrorKind::model, "unsupported xdeepfm format_version " + j.at("format_version").dump());
  }
  XDeepFMModel m;
  m.config = j.at("config").get<XDeepFMConfig>();
  m.dense_dim = j.at("dense_dim").get<std::size_t>();
  auto& p = m.params;
  p.embeddings.dim = j.at("embedding_dim").get<std::size_t>();
  for (const auto& e : j.at("embeddings")) {
    auto t = detail::matrix_from_json(e);
    if (t.cols() != p.embeddings.dim) throw Error(ErrorKind::model, "embedding width mismatch");
    p.embeddings.fields.push_back(std::move(t));
  }
  for (const auto& l : j.at("cross_layers")) {
    p.cross.push_back({detail::matrix_from_json(l.at("W")), l.at("b").get<std::vector<double>>(),
                       l.at("c").get<std::vector<double>>()});
  }
  for (const auto& l : j.at("deep_layers")) {
    p.deep.layers.push_back({detail::matrix_from_json(l.at("W")), l.at("b").get<std::vector<double>>(),
                             parse_activation(l.at("activation").get<std::string>())});
  }
  p.head_w = j.at("head").at("weights").get<std::vector<double>>();
  p.head_b = j.at("head").at("bias").get<double>();
  return m;
}

}  // namespace tabblend::xdeepfm
