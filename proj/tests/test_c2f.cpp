#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mgca/c2f.hpp"
#include "mgca/net.hpp"
#include "mgca/rng.hpp"

using namespace mgca;

namespace {

Tensor2D random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor2D t(r, c);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double top_h_mean(std::vector<double> col, int h) {
  std::sort(col.begin(), col.end(), std::greater<double>());
  double s = 0.0;
  for (int i = 0; i < h; ++i) s += col[static_cast<std::size_t>(i)];
  return s / h;
}

// exhaustive best mean over all size-h subsets
double best_subset_mean(const std::vector<double>& col, int h) {
  const int t = static_cast<int>(col.size());
  std::vector<int> idx(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) idx[static_cast<std::size_t>(i)] = i;
  double best = -1e300;
  while (true) {
    double s = 0.0;
    for (int i : idx) s += col[static_cast<std::size_t>(i)];
    best = std::max(best, s / h);
    int pos = h - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == t - h + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int i = pos + 1; i < h; ++i)
      idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
  }
  return best;
}

TextBank random_bank(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor2D> templates;
  std::vector<int> ids;
  for (int c = 0; c < n; ++c) {
    templates.push_back(random_tensor(2, d, rng));
    ids.push_back(c + 10);  // vocabulary ids need not be dense
  }
  return fuse_templates(templates, ids);
}

}  // namespace

TEST(TemplateFusion, MeanThenNormalize) {
  Tensor2D m = Tensor2D::from(2, 2, {1.0, 0.0, 0.0, 1.0});
  const TextBank bank = fuse_templates({m}, {4});
  ASSERT_EQ(bank.rows(), 1);
  EXPECT_NEAR(bank.fused.at(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(bank.fused.at(0, 1), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(bank.category_ids, (std::vector<int>{4}));
}

TEST(TemplateFusion, IdenticalTemplatesGiveNormalizedCopy) {
  Tensor2D m(3, 4);
  for (int r = 0; r < 3; ++r) {
    m.at(r, 0) = 3.0;
    m.at(r, 2) = 4.0;
  }
  const TextBank bank = fuse_templates({m}, {0});
  EXPECT_NEAR(bank.fused.at(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(bank.fused.at(0, 2), 0.8, 1e-12);
}

TEST(TemplateFusion, RowsAreUnitNorm) {
  Rng rng(3);
  std::vector<Tensor2D> templates;
  std::vector<int> ids;
  for (int c = 0; c < 6; ++c) {
    templates.push_back(random_tensor(5, 8, rng));
    ids.push_back(c);
  }
  const TextBank bank = fuse_templates(templates, ids);
  for (int r = 0; r < bank.rows(); ++r) {
    double n = 0.0;
    for (int j = 0; j < bank.fused.cols; ++j) n += bank.fused.at(r, j) * bank.fused.at(r, j);
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
}

TEST(TemplateFusion, Validation) {
  EXPECT_THROW(fuse_templates({}, {}), ConfigError);
  Tensor2D a(2, 3);
  Tensor2D b(2, 4);
  EXPECT_THROW(fuse_templates({a, b}, {0, 1}), DimensionError);
  EXPECT_THROW(fuse_templates({a}, {0, 1}), DimensionError);
  Tensor2D empty(0, 3);
  EXPECT_THROW(fuse_templates({empty}, {0}), ConfigError);
}

TEST(Similarity, MatchesDirectDotProducts) {
  Rng rng(9);
  const TextBank bank = random_bank(3, 4, 11);
  const Tensor2D f_img = random_tensor(5, 4, rng);
  const Tensor2D s = image_text_similarity(f_img, bank);
  ASSERT_EQ(s.rows, 5);
  ASSERT_EQ(s.cols, 3);
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < 3; ++c) {
      double dot = 0.0;
      for (int j = 0; j < 4; ++j) dot += f_img.at(i, j) * bank.fused.at(c, j);
      EXPECT_DOUBLE_EQ(s.at(i, c), dot);
    }
  }
  Tensor2D wrong(2, 5);
  EXPECT_THROW(image_text_similarity(wrong, bank), DimensionError);
}

TEST(Mil, PoolSize) {
  EXPECT_EQ(mil_pool_size(4), 1);
  EXPECT_EQ(mil_pool_size(8), 1);
  EXPECT_EQ(mil_pool_size(15), 1);
  EXPECT_EQ(mil_pool_size(16), 2);
  EXPECT_EQ(mil_pool_size(100), 12);
}

TEST(Mil, KnownTopTwoMean) {
  // T = 16 so the pool keeps the top two entries
  const TextBank bank = random_bank(1, 4, 2);
  Tensor2D s(16, 1, 0.0);
  const double vals[8] = {0.9, 0.1, 0.5, 0.3, 0.2, 0.4, 0.8, 0.6};
  for (int i = 0; i < 8; ++i) s.at(i, 0) = vals[i];
  const CoarseResult r = mil_coarse_categories(s, bank, 1);
  ASSERT_EQ(r.s_mil.size(), 1u);
  EXPECT_NEAR(r.s_mil[0], 0.85, 1e-15);
}

TEST(Mil, ShortVideoTakesMax) {
  const TextBank bank = random_bank(1, 4, 2);
  Tensor2D s = Tensor2D::from(4, 1, {0.3, 0.9, 0.1, 0.5});
  const CoarseResult r = mil_coarse_categories(s, bank, 1);
  EXPECT_DOUBLE_EQ(r.s_mil[0], 0.9);
}

TEST(Mil, CoarseSelectionOrdersByScore) {
  const TextBank bank = random_bank(3, 4, 5);
  Tensor2D s(4, 3);
  for (int i = 0; i < 4; ++i) {
    s.at(i, 0) = 0.2;
    s.at(i, 1) = 0.8;
    s.at(i, 2) = 0.5;
  }
  const CoarseResult r = mil_coarse_categories(s, bank, 2);
  EXPECT_EQ(r.coarse_ids, (std::vector<int>{1, 2}));
  EXPECT_EQ(r.f_coarse.rows, 2);
  for (int j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(r.f_coarse.at(0, j), bank.fused.at(1, j));
    EXPECT_DOUBLE_EQ(r.f_coarse.at(1, j), bank.fused.at(2, j));
  }
}

TEST(Mil, TiesPickLowerIndex) {
  const TextBank bank = random_bank(3, 4, 6);
  Tensor2D s(4, 3, 0.5);
  const CoarseResult r = mil_coarse_categories(s, bank, 2);
  EXPECT_EQ(r.coarse_ids, (std::vector<int>{0, 1}));
}

TEST(Mil, KeepsAtMostVocabulary) {
  const TextBank bank = random_bank(2, 4, 7);
  Tensor2D s(4, 2, 0.3);
  const CoarseResult r = mil_coarse_categories(s, bank, 5);
  EXPECT_EQ(r.coarse_ids.size(), 2u);
}

TEST(Mil, MatchesExhaustiveSubsetSearch) {
  Rng rng(4242);
  const TextBank bank = random_bank(1, 4, 3);
  int cases = 0;
  // pool of size one: best singleton
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 2 + static_cast<int>(rng.uniform_index(11));
    Tensor2D s(t, 1);
    std::vector<double> col;
    for (int i = 0; i < t; ++i) {
      s.at(i, 0) = rng.uniform(-1.0, 1.0);
      col.push_back(s.at(i, 0));
    }
    const int h = mil_pool_size(t);
    const CoarseResult r = mil_coarse_categories(s, bank, 1);
    EXPECT_DOUBLE_EQ(r.s_mil[0], best_subset_mean(col, h));
    EXPECT_DOUBLE_EQ(r.s_mil[0], top_h_mean(col, h));
    ++cases;
  }
  // larger pools still match the exhaustive answer
  for (int trial = 0; trial < 60; ++trial) {
    const int t = 16 + static_cast<int>(rng.uniform_index(9));
    Tensor2D s(t, 1);
    std::vector<double> col;
    for (int i = 0; i < t; ++i) {
      s.at(i, 0) = rng.uniform(-1.0, 1.0);
      col.push_back(s.at(i, 0));
    }
    const int h = mil_pool_size(t);
    ASSERT_GE(h, 2);
    const CoarseResult r = mil_coarse_categories(s, bank, 1);
    EXPECT_NEAR(r.s_mil[0], best_subset_mean(col, h), 1e-12);
    ++cases;
  }
  EXPECT_EQ(cases, 260);
}

TEST(Mil, PermutationInvariantAndMonotone) {
  Rng rng(88);
  const TextBank bank = random_bank(1, 4, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const int t = 6 + static_cast<int>(rng.uniform_index(20));
    std::vector<double> col;
    for (int i = 0; i < t; ++i) col.push_back(rng.uniform(-1.0, 1.0));
    Tensor2D s(t, 1);
    for (int i = 0; i < t; ++i) s.at(i, 0) = col[static_cast<std::size_t>(i)];
    const double base = mil_coarse_categories(s, bank, 1).s_mil[0];

    std::vector<double> shuffled = col;
    rng.shuffle(shuffled);
    Tensor2D sp(t, 1);
    for (int i = 0; i < t; ++i) sp.at(i, 0) = shuffled[static_cast<std::size_t>(i)];
    EXPECT_DOUBLE_EQ(mil_coarse_categories(sp, bank, 1).s_mil[0], base);

    Tensor2D bumped = s;
    const int k = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(t)));
    bumped.at(k, 0) += rng.uniform(0.0, 0.5);
    EXPECT_GE(mil_coarse_categories(bumped, bank, 1).s_mil[0], base);
  }
}

TEST(SpanPooling, AveragesCoveredRows) {
  FeatureMatrix f;
  f.feat = Tensor2D::from(5, 2, {0, 0, 2, 1, 4, 3, 6, 5, 8, 7});
  f.rate = 1.0;
  const Tensor2D out = pool_span_features(f, {{1.0, 3.0}});
  ASSERT_EQ(out.rows, 1);
  // rows floor(1.0) through ceil(3.0) exclusive: indices 1 and 2
  EXPECT_DOUBLE_EQ(out.at(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1), 2.0);
}

TEST(SpanPooling, SingleRowSpan) {
  FeatureMatrix f;
  f.feat = Tensor2D::from(3, 1, {10, 20, 30});
  f.rate = 1.0;
  const Tensor2D out = pool_span_features(f, {{1.2, 1.8}});
  EXPECT_DOUBLE_EQ(out.at(0, 0), 20.0);
}

TEST(SpanPooling, DegenerateSpanFallsBackToNearestRow) {
  FeatureMatrix f;
  f.feat = Tensor2D::from(4, 1, {10, 20, 30, 40});
  f.rate = 1.0;
  // zero-length span at t = 2.0 pools the row whose center is nearest
  const Tensor2D out = pool_span_features(f, {{2.0, 2.0}});
  EXPECT_TRUE(out.at(0, 0) == 20.0 || out.at(0, 0) == 30.0);
  const Tensor2D tail = pool_span_features(f, {{100.0, 100.0}});
  EXPECT_DOUBLE_EQ(tail.at(0, 0), 40.0);
}

TEST(SpanPooling, RespectsFeatureRate) {
  FeatureMatrix f;
  f.feat = Tensor2D::from(6, 1, {1, 2, 3, 4, 5, 6});
  f.rate = 2.0;  // two rows per second
  const Tensor2D out = pool_span_features(f, {{0.5, 1.5}});
  // rows [1, 3): values 2 and 3
  EXPECT_DOUBLE_EQ(out.at(0, 0), 2.5);
}

TEST(SpanPooling, EmptySpanListGivesEmptyMatrix) {
  FeatureMatrix f;
  f.feat = Tensor2D(3, 2, 1.0);
  f.rate = 1.0;
  const Tensor2D out = pool_span_features(f, {});
  EXPECT_EQ(out.rows, 0);
  EXPECT_EQ(out.cols, 2);
}

TEST(FineAssignment, PicksFromCoarseSetOnly) {
  Rng rng(31);
  ModelConfig cfg;
  cfg.d_vid = 2;
  cfg.d_fpn = 3;
  cfg.d_img = 4;
  cfg.d_text = 4;
  cfg.levels = 1;
  cfg.strides = {1};
  cfg.n_base = 2;
  for (int trial = 0; trial < 200; ++trial) {
    cfg.seed = static_cast<std::uint64_t>(trial + 1);
    ModelParams params = init_params(cfg);
    const TextBank bank = random_bank(4, 4, static_cast<std::uint64_t>(trial + 100));
    Tensor2D s_img = random_tensor(8, 4, rng);
    const CoarseResult coarse = mil_coarse_categories(s_img, bank, 2);
    const int n = 1 + static_cast<int>(rng.uniform_index(4));
    Tensor2D f_np = random_tensor(n, 4, rng);
    std::vector<Interval> spans;
    std::vector<double> aps;
    for (int i = 0; i < n; ++i) {
      spans.push_back({static_cast<double>(i), i + 1.5});
      aps.push_back(rng.uniform(0.5, 1.0));
    }
    const auto out = assign_fine_categories(f_np, spans, aps, bank, coarse, params, 0.07);
    ASSERT_EQ(out.size(), static_cast<std::size_t>(n));
    std::vector<int> coarse_vocab;
    for (int row : coarse.coarse_ids)
      coarse_vocab.push_back(bank.category_ids[static_cast<std::size_t>(row)]);
    for (int i = 0; i < n; ++i) {
      const NovelInstance& ni = out[static_cast<std::size_t>(i)];
      EXPECT_TRUE(std::find(coarse_vocab.begin(), coarse_vocab.end(), ni.category) !=
                  coarse_vocab.end())
          << "category " << ni.category;
      EXPECT_DOUBLE_EQ(ni.interval.t_s, spans[static_cast<std::size_t>(i)].t_s);
      EXPECT_DOUBLE_EQ(ni.interval.t_e, spans[static_cast<std::size_t>(i)].t_e);
      EXPECT_GT(ni.score, 0.0);
      EXPECT_LE(ni.score, aps[static_cast<std::size_t>(i)] + 1e-12);
    }
  }
}

TEST(FineAssignment, ScoreIsApsTimesSoftmaxWeight) {
  ModelConfig cfg;
  cfg.d_vid = 2;
  cfg.d_fpn = 3;
  cfg.d_img = 4;
  cfg.d_text = 4;
  cfg.levels = 1;
  cfg.strides = {1};
  cfg.n_base = 2;
  cfg.seed = 12;
  ModelParams params = init_params(cfg);
  const TextBank bank = random_bank(3, 4, 9);
  Rng rng(77);
  Tensor2D s_img = random_tensor(6, 3, rng);
  const CoarseResult coarse = mil_coarse_categories(s_img, bank, 2);
  Tensor2D f_np = random_tensor(1, 4, rng);
  const double aps = 0.8;
  const double tau = 0.07;
  const auto out = assign_fine_categories(f_np, {{0.0, 2.0}}, {aps}, bank, coarse, params, tau);
  ASSERT_EQ(out.size(), 1u);

  // recompute the projected similarities by hand
  Graph g;
  NodeId z = proj_forward(g, g.constant(f_np), params);
  const Tensor2D& zv = g.value(z);
  std::vector<double> logits;
  for (int r = 0; r < coarse.f_coarse.rows; ++r) {
    double dot = 0.0;
    for (int j = 0; j < 4; ++j) dot += zv.at(0, j) * coarse.f_coarse.at(r, j);
    logits.push_back(dot / tau);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double zsum = 0.0;
  for (double v : logits) zsum += std::exp(v - mx);
  const std::size_t arg = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  const double weight = std::exp(logits[arg] - mx) / zsum;
  EXPECT_EQ(out[0].category,
            bank.category_ids[static_cast<std::size_t>(coarse.coarse_ids[arg])]);
  EXPECT_NEAR(out[0].score, aps * weight, 1e-12);
}

TEST(FineAssignment, EmptyProposalsGiveEmptyResult) {
  ModelConfig cfg;
  cfg.d_vid = 2;
  cfg.d_fpn = 3;
  cfg.d_img = 4;
  cfg.d_text = 4;
  cfg.levels = 1;
  cfg.strides = {1};
  cfg.n_base = 2;
  ModelParams params = init_params(cfg);
  const TextBank bank = random_bank(2, 4, 13);
  Rng rng(5);
  Tensor2D s_img = random_tensor(4, 2, rng);
  const CoarseResult coarse = mil_coarse_categories(s_img, bank, 2);
  Tensor2D f_np(0, 4);
  const auto out = assign_fine_categories(f_np, {}, {}, bank, coarse, params, 0.07);
  EXPECT_TRUE(out.empty());

  CoarseResult no_coarse;
  no_coarse.f_coarse = Tensor2D(0, 4);
  Tensor2D one(1, 4, 0.5);
  EXPECT_THROW(
      assign_fine_categories(one, {{0.0, 1.0}}, {0.9}, bank, no_coarse, params, 0.07),
      ContractError);
}
