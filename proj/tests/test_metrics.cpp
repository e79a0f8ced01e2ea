#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include <foh/metrics.hpp>
#include <foh/pipeline.hpp>

#include "oracles.hpp"

using namespace foh;

namespace {

RelevanceSet rel(std::size_t universe, std::vector<std::uint64_t> ids) { return RelevanceSet::from_ids(universe, ids); }

Dataset labeled(std::size_t c, const std::vector<std::set<int>>& sets) {
  const std::size_t n = sets.size();
  return Dataset{FeatureMatrix(1, std::vector<float>(n, 0.0f)), oracle::labels(c, sets), dense_ids(n)};
}

}  // namespace

TEST(AveragePrecision, HandExamples) {
  const std::vector<std::uint64_t> ranked{0, 1, 2};
  EXPECT_NEAR(average_precision(ranked, rel(3, {0, 2}), MapMode::full), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(average_precision(ranked, rel(3, {0, 2}), MapMode::full), 0.8333, 1e-4);
  EXPECT_DOUBLE_EQ(average_precision(ranked, rel(3, {0, 1}), MapMode::full), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(ranked, rel(5, {3, 4}), MapMode::full), 0.0);
  EXPECT_DOUBLE_EQ(average_precision(ranked, rel(3, {}), MapMode::full), 0.0);
}

TEST(AveragePrecision, TruncatedModeDividesByRetrievedHits) {
  const std::vector<std::uint64_t> ranked{0, 1};
  const auto r = rel(4, {0, 3});
  EXPECT_DOUBLE_EQ(average_precision(ranked, r, MapMode::full), 0.5);
  EXPECT_DOUBLE_EQ(average_precision(ranked, r, MapMode::truncated), 1.0);
}

TEST(AveragePrecision, MatchesOracleAndStaysInRange) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint64_t> ids(50);
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    std::shuffle(ids.begin(), ids.end(), gen);
    std::set<std::uint64_t> r;
    std::bernoulli_distribution coin(0.3);
    for (std::uint64_t i = 0; i < 50; ++i)
      if (coin(gen)) r.insert(i);
    const std::vector<std::uint64_t> rv(r.begin(), r.end());
    const double ap = average_precision(ids, rel(50, rv), MapMode::full);
    EXPECT_NEAR(ap, oracle::average_precision(ids, r), 1e-12);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(PrecisionRecall, AtK) {
  const std::vector<std::uint64_t> ranked{0, 1, 2, 3};
  const auto [p, r] = precision_recall_at_k(ranked, rel(8, {1, 5, 6, 7}), 2);
  EXPECT_DOUBLE_EQ(p, 0.5);
  EXPECT_DOUBLE_EQ(r, 0.25);
  // k beyond the list still divides by k.
  EXPECT_DOUBLE_EQ(precision_recall_at_k(ranked, rel(8, {1}), 8).first, 1.0 / 8.0);
  EXPECT_THROW(precision_recall_at_k(ranked, rel(8, {1}), 0), std::invalid_argument);
}

TEST(PrCurve, PointsAtEachHit) {
  const std::vector<std::uint64_t> ranked{0, 1, 2, 3};
  const auto curve = pr_curve(ranked, rel(4, {1, 3}));
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_DOUBLE_EQ(curve[0].first, 0.5);
  EXPECT_DOUBLE_EQ(curve[0].second, 0.5);
  EXPECT_DOUBLE_EQ(curve[1].first, 1.0);
  EXPECT_DOUBLE_EQ(curve[1].second, 0.5);
  EXPECT_TRUE(pr_curve(ranked, rel(4, {})).empty());
}

TEST(Evaluate, InterpolatedCurveAndEmptyRelevance) {
  GroundTruth gt;
  gt.relevant = {rel(4, {0, 2}), rel(4, {})};
  const auto rep = evaluate_rankings({{0, 1, 2, 3}, {3, 2}}, gt, {.at = {1, 2}});
  EXPECT_NEAR(rep.map, (1.0 + 2.0 / 3.0) / 2.0 / 2.0, 1e-15);
  EXPECT_EQ(rep.empty_relevance, 1u);
  ASSERT_EQ(rep.pr_curve.size(), 11u);
  EXPECT_DOUBLE_EQ(rep.pr_curve[0].second, 0.5);  // first query 1.0, second 0
  EXPECT_DOUBLE_EQ(rep.pr_curve[10].second, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(rep.precision_at.at(1), 0.5);
  EXPECT_DOUBLE_EQ(rep.recall_at.at(2), 0.25);
}

TEST(Evaluate, QueryOrderDoesNotMatter) {
  std::mt19937_64 gen(2);
  std::vector<std::vector<std::uint64_t>> rankings;
  GroundTruth gt;
  for (int q = 0; q < 20; ++q) {
    std::vector<std::uint64_t> ids(30);
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    std::shuffle(ids.begin(), ids.end(), gen);
    rankings.push_back(ids);
    gt.relevant.push_back(rel(30, {ids[3], ids[7], 11}));
  }
  const auto a = evaluate_rankings(rankings, gt);
  std::reverse(rankings.begin(), rankings.end());
  std::reverse(gt.relevant.begin(), gt.relevant.end());
  const auto b = evaluate_rankings(rankings, gt);
  EXPECT_NEAR(a.map, b.map, 1e-12);
  EXPECT_THROW(evaluate_rankings({{1}}, gt), std::invalid_argument);
}

TEST(GroundTruth, ShareAnyLabelMatchesOracle) {
  std::mt19937_64 gen(3);
  const auto lq = oracle::random_labels(5, 15, gen), lb = oracle::random_labels(5, 40, gen);
  Dataset q{FeatureMatrix(1, std::vector<float>(15, 0)), lq, dense_ids(15)};
  Dataset b{FeatureMatrix(1, std::vector<float>(40, 0)), lb, dense_ids(40)};
  const GroundTruth gt = build_ground_truth(q, b, RelevanceRule::share_any_label, false, 3);
  for (std::size_t i = 0; i < 15; ++i)
    for (std::size_t j = 0; j < 40; ++j) {
      const auto a = oracle::label_set(lq, i), c = oracle::label_set(lb, j);
      std::vector<int> common;
      std::set_intersection(a.begin(), a.end(), c.begin(), c.end(), std::back_inserter(common));
      EXPECT_EQ(gt.relevant[i].contains(j), !common.empty());
    }
}

TEST(GroundTruth, SingleLabelRuleAndSelfExclusion) {
  const Dataset base = labeled(3, {{0}, {1}, {0}, {2}});
  const Dataset q = base.subset(std::vector<std::size_t>{0});
  const GroundTruth gt = build_ground_truth(q, base, RelevanceRule::same_single_label, true);
  EXPECT_FALSE(gt.relevant[0].contains(0));
  EXPECT_TRUE(gt.relevant[0].contains(2));
  EXPECT_EQ(gt.relevant[0].size(), 1u);
  EXPECT_THROW(build_ground_truth(labeled(3, {{0, 1}}), base, RelevanceRule::same_single_label),
               std::invalid_argument);
}

TEST(LshBaseline, DeterministicAndBetterThanChance) {
  EXPECT_EQ(lsh_baseline(6, 16, 9).W, lsh_baseline(6, 16, 9).W);
  const SyntheticData sd = gen_synthetic_full({.n_clusters = 2, .dim = 8, .samples = 600, .labels_min = 1,
                                               .labels_max = 1, .cluster_std = 0.3, .seed = 4});
  const Dataset& ds = sd.dataset;
  std::vector<std::size_t> qi(50);
  std::iota(qi.begin(), qi.end(), std::size_t{0});
  const Dataset queries = ds.subset(qi);
  HashModel m = lsh_baseline(8, 32, 5);
  m.update_center(ds.features);
  const auto res = run_queries(m, nullptr, ds, queries, QueryMode::full, 0, 0);
  const GroundTruth gt = build_ground_truth(queries, ds, RelevanceRule::share_any_label);
  const auto rep = evaluate_queries(res, gt, {});
  // A random ranking scores the fraction of relevant items on average.
  double prevalence = 0;
  for (const auto& r : gt.relevant) prevalence += static_cast<double>(r.size()) / static_cast<double>(ds.size());
  prevalence /= static_cast<double>(gt.relevant.size());
  EXPECT_GT(rep.map, prevalence);
}

TEST(Report, JsonKeysAndCsv) {
  GroundTruth gt;
  gt.relevant = {rel(3, {0})};
  auto rep = evaluate_rankings({{0, 1, 2}}, gt, {.at = {1}});
  const auto j = to_json(rep);
  for (const char* key : {"map", "precision_at", "recall_at", "pr_curve", "timing", "op_counts"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_FALSE(to_json(rep, false).contains("timing"));
  const std::string csv = pr_curve_csv(rep);
  EXPECT_EQ(csv.rfind("recall,precision\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST(Bench, PoolWorkWithinBound) {
  const Dataset ds = gen_synthetic({.n_clusters = 4, .dim = 8, .samples = 1200, .seed = 6});
  std::vector<std::size_t> qi;
  for (std::size_t i = 0; i < 40; ++i) qi.push_back(i * 30);
  const Dataset queries = ds.subset(qi);
  HyperParams h;
  h.u = 20;
  h.v = 30;
  h.beta = 4;
  h.r = 2;
  const auto idx = train_stream(ds, h, {.bits = 16, .batch_size = 400});
  const GroundTruth gt = build_ground_truth(queries, ds, RelevanceRule::share_any_label);
  const auto [pool_rep, full_rep] =
      bench_compare(idx.model, idx.pool, ds, queries, gt, {.top_k = 50, .beta = 4, .repetitions = 1});
  EXPECT_EQ(pool_rep.ops.bound_violations, 0u);
  EXPECT_LE(pool_rep.ops.max_codes_compared, 20u + 4u * 30u);
  EXPECT_EQ(full_rep.ops.max_candidates_encoded, 1200u);
  EXPECT_GE(pool_rep.map, 0.0);
  EXPECT_LE(full_rep.map, 1.0);
}
