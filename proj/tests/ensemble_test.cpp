#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "support/oracles.hpp"
#include "tabblend/ensemble.hpp"

namespace {

using namespace tabblend;
using namespace tabblend::ensemble;

TEST(Blend, EndpointsAndMidpoint) {
  const std::vector<double> g{0.2, 0.7, 1e-9}, x{0.6, 0.1, 0.999};
  EXPECT_EQ(blend(g, x, 1.0), g);
  EXPECT_EQ(blend(g, x, 0.0), x);
  EXPECT_NEAR(blend(std::vector<double>{0.2}, std::vector<double>{0.6}, 0.5)[0], 0.4, 1e-15);
}

TEST(Blend, Errors) {
  EXPECT_THROW(blend(std::vector<double>{0.1}, std::vector<double>{0.1, 0.2}, 0.5), Error);
  EXPECT_THROW(blend(std::vector<double>{0.1}, std::vector<double>{0.2}, 1.5), Error);
  EXPECT_THROW(blend(std::vector<double>{0.1}, std::vector<double>{0.2}, -0.01), Error);
}

TEST(Blend, MonotoneInBothInputs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = uniform_real(rng, 0, 1);
    const double g = uniform_real(rng, 0, 1), x = uniform_real(rng, 0, 1);
    const double g2 = uniform_real(rng, g, 1), x2 = uniform_real(rng, x, 1);
    const double lo = blend(std::vector<double>{g}, std::vector<double>{x}, a)[0];
    const double hi = blend(std::vector<double>{g2}, std::vector<double>{x2}, a)[0];
    EXPECT_LE(lo, hi);
    EXPECT_GE(lo, 0.0);
    EXPECT_LE(hi, 1.0);
  }
}

TEST(AlphaGrid, CoversBothEndpoints) {
  const auto grid = alpha_grid({});
  EXPECT_EQ(grid.size(), 101u);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 1.0);
  EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));
  const auto coarse = alpha_grid({0.3});
  EXPECT_EQ(coarse, (std::vector<double>{0.0, 0.3, 0.6, 0.8999999999999999, 1.0}));
  EXPECT_THROW(alpha_grid({0.0}), Error);
  EXPECT_THROW(alpha_grid({0.6}), Error);
}

TEST(GridSearch, ReversedModelWithWideGapsForcesAlphaOne) {
  // gbdt ranks perfectly with tiny gaps; xdeepfm reverses with wide ones, so
  // any weight left on xdeepfm (even 0.01) misorders a pair.
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const std::vector<double> good{0.500, 0.501, 0.502, 0.503, 0.504, 0.505};
  const std::vector<double> bad{0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
  double best_a = -1, best = -1;
  for (int i = 0; i <= 100; ++i) {
    const double a = i == 100 ? 1.0 : i * 0.01;
    std::vector<double> b(6);
    for (int k = 0; k < 6; ++k) b[k] = a * good[k] + (1 - a) * bad[k];
    const double s = oracle::pair_auc(y, b);
    if (s > best) {
      best = s;
      best_a = a;
    }
  }
  EXPECT_EQ(best_a, 1.0);
  EXPECT_EQ(grid_search_alpha(y, good, bad).alpha, 1.0);
}

TEST(GridSearch, PerfectVersusReversedPicksTheGoodModel) {
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const std::vector<double> good{0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
  const std::vector<double> bad{0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
  // oracle: exhaustive grid with pair-enumeration AUC
  double best_a = -1, best = -1;
  for (int i = 0; i <= 100; ++i) {
    const double a = i == 100 ? 1.0 : i * 0.01;
    std::vector<double> b(6);
    for (int k = 0; k < 6; ++k) b[k] = a * good[k] + (1 - a) * bad[k];
    const double s = oracle::pair_auc(y, b);
    if (s > best) {
      best = s;
      best_a = a;
    }
  }
  const auto res = grid_search_alpha(y, good, bad);
  EXPECT_EQ(res.alpha, best_a);
  // every alpha above 1/2 ranks perfectly, so the first perfect grid point wins
  EXPECT_NEAR(res.alpha, 0.51, 1e-12);
  EXPECT_EQ(res.record.size(), 101u);
}

TEST(GridSearch, WithoutTiesAlphaOneWinsForADominantModel) {
  const std::vector<int> y{0, 1, 0, 1, 0, 1};
  const std::vector<double> good{0.1, 0.9, 0.2, 0.8, 0.3, 0.7};
  const std::vector<double> noisy{0.5, 0.4, 0.6, 0.55, 0.45, 0.35};
  const auto res = grid_search_alpha(y, good, noisy);
  const auto top = std::max_element(res.record.begin(), res.record.end(),
                                    [](const GridPoint& a, const GridPoint& b) { return a.auc < b.auc; });
  EXPECT_EQ(top->auc, 1.0);
  EXPECT_EQ(res.alpha, top->alpha);
}

TEST(GridSearch, IdenticalInputsTieAtAlphaZero) {
  const std::vector<int> y{0, 1, 1, 0, 1};
  const std::vector<double> p{0.3, 0.6, 0.2, 0.4, 0.9};
  const auto res = grid_search_alpha(y, p, p);
  EXPECT_EQ(res.alpha, 0.0);
  for (const auto& g : res.record) EXPECT_EQ(g.auc, res.record.front().auc);
}

TEST(GridSearch, SingleClassIsRejected) {
  EXPECT_THROW(grid_search_alpha(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}, std::vector<double>{0.3, 0.4}),
               Error);
}

struct Case {
  std::vector<int> y;
  std::vector<double> g, x;
};

Case random_case(std::mt19937_64& rng) {
  Case c;
  const std::size_t n = 10 + uniform_index(rng, 60);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(uniform_index(rng, 2));
    c.y.push_back(y);
    c.g.push_back(std::clamp(0.5 + 0.3 * (y - 0.5) + uniform_real(rng, -0.4, 0.4), 0.0, 1.0));
    c.x.push_back(std::clamp(0.5 + 0.3 * (y - 0.5) + uniform_real(rng, -0.4, 0.4), 0.0, 1.0));
  }
  c.y[0] = 0;
  c.y[1] = 1;
  return c;
}

TEST(GridSearchProperty, SelectedAucDominatesBothEndpointsAndIsTheRecordMax) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_case(rng);
    const auto res = grid_search_alpha(c.y, c.g, c.x);
    double at_alpha = -1, best = -1;
    for (const auto& p : res.record) {
      best = std::max(best, p.auc);
      if (p.alpha == res.alpha) at_alpha = p.auc;
    }
    EXPECT_EQ(at_alpha, best);
    EXPECT_GE(at_alpha, metrics::auc(c.y, c.g));
    EXPECT_GE(at_alpha, metrics::auc(c.y, c.x));
    EXPECT_EQ(res.record.front().alpha, 0.0);
    EXPECT_EQ(res.record.back().alpha, 1.0);
  }
}

TEST(GridSearchProperty, ExampleOrderDoesNotMatter) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_case(rng);
    std::vector<std::size_t> perm(c.y.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    seeded_shuffle(perm, rng);
    Case p;
    for (auto i : perm) {
      p.y.push_back(c.y[i]);
      p.g.push_back(c.g[i]);
      p.x.push_back(c.x[i]);
    }
    const auto a = grid_search_alpha(c.y, c.g, c.x);
    const auto b = grid_search_alpha(p.y, p.g, p.x);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_EQ(a.record, grid_search_alpha(c.y, c.g, c.x).record);
  }
}

TEST(EnsemblePersistence, RoundTrip) {
  EnsembleModel m{0.37, "gbdt.json", "xdeepfm.json", {{0.0, 0.81}, {0.37, 0.86}, {1.0, 0.84}}};
  const auto back = model_from_json(json::parse(model_to_json(m).dump()));
  EXPECT_EQ(back.alpha, m.alpha);
  EXPECT_EQ(back.gbdt_path, m.gbdt_path);
  EXPECT_EQ(back.xdeepfm_path, m.xdeepfm_path);
  EXPECT_EQ(back.search_record, m.search_record);
  auto j = model_to_json(m);
  j["alpha"] = 1.5;
  EXPECT_THROW(model_from_json(j), Error);
}

}  // namespace
