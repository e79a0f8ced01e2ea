#include <gtest/gtest.h>

#include <random>
#include <set>

#include <foh/similarity.hpp>

#include "oracles.hpp"

using namespace foh;

namespace {

// Row j of a one-sample label matrix built from a set.
LabelMatrix one(std::size_t c, const std::set<int>& s) { return oracle::labels(c, {s}); }

double multi(const std::set<int>& a, const std::set<int>& b, std::size_t c = 4) {
  return pair_similarity_multilabel(one(c, a).row(0), one(c, b).row(0));
}

std::vector<std::set<int>> all_subsets(int c) {
  std::vector<std::set<int>> out;
  for (int mask = 0; mask < (1 << c); ++mask) {
    std::set<int> s;
    for (int i = 0; i < c; ++i)
      if (mask >> i & 1) s.insert(i);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(MultiLabel, HandExamples) {
  const int a = 0, b = 1, c = 2, d = 3;
  EXPECT_DOUBLE_EQ(multi({a, b, c}, {a, b, c}), 1.0);
  EXPECT_DOUBLE_EQ(multi({a, b}, {a}), 0.75);
  EXPECT_DOUBLE_EQ(multi({a}, {b}), 0.0);
  EXPECT_DOUBLE_EQ(multi({a, b, c, d}, {c, d}), 0.75);
  EXPECT_DOUBLE_EQ(multi({}, {a}), 0.0);
  EXPECT_DOUBLE_EQ(multi({}, {}), 0.0);
}

TEST(MultiLabel, ExhaustiveAgainstSetArithmetic) {
  for (int c = 1; c <= 4; ++c) {
    const auto subsets = all_subsets(c);
    for (const auto& x : subsets)
      for (const auto& y : subsets) {
        const double s = multi(x, y, static_cast<std::size_t>(c));
        EXPECT_DOUBLE_EQ(s, oracle::similarity(x, y));
        EXPECT_DOUBLE_EQ(s, multi(y, x, static_cast<std::size_t>(c)));
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        if (!x.empty() && !y.empty()) {
          EXPECT_EQ(s == 1.0, x == y);
        }
      }
  }
}

TEST(MultiLabel, MoreSharedLabelsRankHigher) {
  const int a = 0, b = 1, c = 2;
  EXPECT_GT(multi({a, b}, {a, b, c}), multi({a}, {a, b, c}));
}

TEST(MultiLabel, MonotoneInSharedAndUnsharedLabels) {
  const int c = 4;
  for (const auto& x : all_subsets(c))
    for (const auto& y : all_subsets(c)) {
      if (x.empty() || y.empty()) continue;
      const double base = multi(x, y);
      for (int t = 0; t < c; ++t) {
        if (!x.count(t) && !y.count(t)) {
          auto x2 = x, y2 = y;
          x2.insert(t);
          y2.insert(t);
          EXPECT_GE(multi(x2, y2), base);
          auto x3 = x;
          x3.insert(t);
          EXPECT_LE(multi(x3, y), base);
        }
      }
    }
}

TEST(SingleLabel, Rule) {
  EXPECT_EQ(pair_similarity_single(one(3, {0}).row(0), one(3, {0}).row(0)), 1);
  EXPECT_EQ(pair_similarity_single(one(3, {0}).row(0), one(3, {1}).row(0)), -1);
  try {
    pair_similarity_single(one(3, {0, 1}).row(0), one(3, {0}).row(0));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "not single-label");
  }
  EXPECT_THROW(pair_similarity_single(one(3, {}).row(0), one(3, {0}).row(0)), std::invalid_argument);
}

TEST(SingleLabel, GradedRuleAgreesOnOneHotSets) {
  for (int x = 0; x < 5; ++x)
    for (int y = 0; y < 5; ++y) {
      const auto a = one(5, {x}), b = one(5, {y});
      EXPECT_DOUBLE_EQ(signed_similarity(a.row(0), b.row(0), SimilarityMode::multi),
                       pair_similarity_single(a.row(0), b.row(0)));
    }
}

TEST(BalancedTarget, SingleLabelEntries) {
  HyperParams h;
  const auto ls = oracle::labels(3, {{0}, {1}});
  const auto le = oracle::labels(3, {{0}});
  const SimilarityMatrix s = build_balanced_target(ls, le, h, SimilarityMode::single);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.2);
  EXPECT_DOUBLE_EQ(s(1, 0), -0.2);
}

TEST(BalancedTarget, MultiLabelEntries) {
  HyperParams h;
  const auto ls = oracle::labels(4, {{0, 1}, {2}, {0, 1, 2, 3}});
  const auto le = oracle::labels(4, {{0, 1}, {3}});
  const SimilarityMatrix s = build_balanced_target(ls, le, h, SimilarityMode::multi);
  EXPECT_DOUBLE_EQ(s(0, 0), h.eta_s);
  EXPECT_DOUBLE_EQ(s(0, 1), -h.eta_d);
  EXPECT_DOUBLE_EQ(s(1, 1), -h.eta_d);
  // {a,b,c,d} vs {a,b}: s = 0.75, mapped 0.5.
  EXPECT_DOUBLE_EQ(s(2, 0), h.eta_s * 0.5);
}

TEST(BalancedTarget, BinaryRuleIgnoresOverlapSize) {
  HyperParams h;
  const auto ls = oracle::labels(4, {{0, 1, 2}, {3}});
  const auto le = oracle::labels(4, {{0}});
  const SimilarityMatrix s = build_balanced_target(ls, le, h, SimilarityMode::binary);
  EXPECT_DOUBLE_EQ(s(0, 0), h.eta_s);
  EXPECT_DOUBLE_EQ(s(1, 0), -h.eta_d);
}

TEST(BalancedTarget, CategoryMismatch) {
  EXPECT_THROW(build_balanced_target(LabelMatrix(3, 1), LabelMatrix(4, 1), HyperParams{}, SimilarityMode::multi),
               std::invalid_argument);
}

TEST(BalancedTarget, FactoredProductsMatchDenseOracle) {
  std::mt19937_64 gen(31);
  HyperParams h;
  for (int trial = 0; trial < 10; ++trial) {
    const auto ls = oracle::random_labels(5, 23, gen);
    const auto le = oracle::random_labels(5, 31, gen);
    const SimilarityMatrix s = build_balanced_target(ls, le, h, SimilarityMode::multi);
    Eigen::MatrixXd dense(23, 31);
    for (int i = 0; i < 23; ++i)
      for (int j = 0; j < 31; ++j)
        dense(i, j) = oracle::target_multi(oracle::label_set(ls, i), oracle::label_set(le, j), h.eta_s, h.eta_d);
    ASSERT_TRUE(s.dense().isApprox(dense, 0.0) || (s.dense() - dense).cwiseAbs().maxCoeff() < 1e-15);

    const Eigen::MatrixXd bs = oracle::random_signs(6, 23, gen), be = oracle::random_signs(6, 31, gen);
    EXPECT_LT((s.left_multiply(bs) - bs * dense).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((s.right_multiply_transpose(be) - be * dense.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(s.squared_norm(), dense.squaredNorm(), 1e-10);

    const std::vector<std::size_t> cols{30, 2, 2, 17};
    const Eigen::MatrixXd sub = s.select_columns(cols).dense();
    for (std::size_t j = 0; j < cols.size(); ++j)
      EXPECT_EQ(sub.col(static_cast<Eigen::Index>(j)), dense.col(static_cast<Eigen::Index>(cols[j])));
  }
}

TEST(DetectMode, SingleVersusMulti) {
  EXPECT_EQ(detect_mode(oracle::labels(3, {{0}, {2}})), SimilarityMode::single);
  EXPECT_EQ(detect_mode(oracle::labels(3, {{0}, {1, 2}})), SimilarityMode::multi);
}
