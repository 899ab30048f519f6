#pragma once

// Binary cross-entropy, ROC construction and rank-statistic AUC.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tabblend/common.hpp"

namespace tabblend::metrics {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  // thresholds[i] is the cut producing points[i] (score >= cut is positive);
  // the first entry is +inf.
  std::vector<double> thresholds;
};

struct EvalReport {
  std::string model;
  double auc = 0.0;
  double bce = 0.0;
  std::size_t n = 0;
  std::size_t positives = 0;
};

namespace detail {

inline void check_inputs(std::span<const int> y, std::span<const double> s, const char* op) {
  if (y.size() != s.size()) {
    throw Error(ErrorKind::data, std::string(op) + ": label/score length mismatch");
  }
  if (y.empty()) {
    throw Error(ErrorKind::data, std::string(op) + ": empty input");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) {
      throw Error(ErrorKind::data, std::string(op) + ": labels must be 0 or 1");
    }
    if (!std::isfinite(s[i])) {
      throw Error(ErrorKind::data, std::string(op) + ": non-finite score at index " + std::to_string(i));
    }
  }
}

// Indices sorted by descending score; ties keep index order.
inline std::vector<std::size_t> descending_order(std::span<const double> s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return order;
}

struct ClassCounts {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
};

inline ClassCounts count_classes(std::span<const int> y, const char* op) {
  ClassCounts c;
  for (int v : y) {
    (v == 1 ? c.pos : c.neg) += 1;
  }
  if (c.pos == 0 || c.neg == 0) {
    throw Error(ErrorKind::data, std::string(op) + ": both classes must be present");
  }
  return c;
}

}  // namespace detail

/// Mean binary cross-entropy with probabilities clipped to [1e-12, 1-1e-12].
inline double bce(std::span<const int> y, std::span<const double> p) {
  if (y.empty()) {
    throw Error(ErrorKind::data, "bce: empty input");
  }
  if (y.size() != p.size()) {
    throw Error(ErrorKind::data, "bce: label/probability length mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double q = clip_prob(p[i]);
    total += y[i] == 1 ? std::log(q) : std::log1p(-q);
  }
  return -total / static_cast<double>(y.size());
}

/// ROC curve with one point per distinct score, swept from the highest score
/// down, starting at (0,0) and ending at (1,1).
inline RocCurve roc_curve(std::span<const int> y, std::span<const double> s) {
  detail::check_inputs(y, s, "roc_curve");
  const auto counts = detail::count_classes(y, "roc_curve");
  const auto order = detail::descending_order(s);

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());

  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double cut = s[order[i]];
    while (i < order.size() && s[order[i]] == cut) {
      (y[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(counts.neg),
                            static_cast<double>(tp) / static_cast<double>(counts.pos)});
    curve.thresholds.push_back(cut);
  }
  return curve;
}

/// Trapezoidal area under a ROC curve.
inline double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

/// Mann-Whitney AUC: fraction of positive/negative pairs ranked correctly,
/// ties counted as one half.
inline double auc(std::span<const int> y, std::span<const double> s) {
  detail::check_inputs(y, s, "auc");
  const auto counts = detail::count_classes(y, "auc");
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

  // Twice the concordance count stays integral under half-credit ties.
  std::uint64_t twice_concordant = 0;
  std::uint64_t neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = s[order[i]];
    std::uint64_t p = 0;
    std::uint64_t q = 0;
    while (i < order.size() && s[order[i]] == v) {
      (y[order[i]] == 1 ? p : q) += 1;
      ++i;
    }
    twice_concordant += 2 * p * neg_below + p * q;
    neg_below += q;
  }
  return static_cast<double>(twice_concordant) /
         (2.0 * static_cast<double>(counts.pos) * static_cast<double>(counts.neg));
}

inline EvalReport evaluate(std::string model, std::span<const int> y, std::span<const double> p) {
  EvalReport r;
  r.model = std::move(model);
  r.auc = auc(y, p);
  r.bce = bce(y, p);
  r.n = y.size();
  r.positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  return r;
}

/// Plain-text table with Model / AUC / BCE / N / Positives columns.
inline std::string format_report(std::span<const EvalReport> rows) {
  std::size_t name_w = 5;
  for (const auto& r : rows) {
    name_w = std::max(name_w, r.model.size());
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w)) << "Model" << "  " << std::right
      << std::setw(8) << "AUC" << "  " << std::setw(8) << "BCE" << "  " << std::setw(6) << "N"
      << "  " << std::setw(9) << "Positives" << '\n';
  out << std::string(name_w + 2 + 8 + 2 + 8 + 2 + 6 + 2 + 9, '-') << '\n';
  out << std::fixed;
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(name_w)) << r.model << "  " << std::right
        << std::setprecision(4) << std::setw(8) << r.auc << "  " << std::setw(8) << r.bce << "  "
        << std::setw(6) << r.n << "  " << std::setw(9) << r.positives << '\n';
  }
  return out.str();
}

inline void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "threshold,fpr,tpr\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    const double t = curve.thresholds[k];
    if (std::isinf(t)) {
      out << "inf";
    } else {
      out << t;
    }
    out << ',' << curve.points[k].fpr << ',' << curve.points[k].tpr << '\n';
  }
}

}  // namespace tabblend::metrics
