#include <Eigen/Dense>

#include <random>

#include <gtest/gtest.h>

#include "citerate/centrality.hpp"
#include "support.hpp"

using namespace citerate;
using testing_support::make_store;
using testing_support::PatentSpec;

namespace {

Day d(const char* s) { return *parse_iso_date(s); }

/// Dense sum over k of alpha^k (A^T)^k row sums, A[citing][cited] = 1.
std::vector<double> dense_katz(std::size_t n, const std::vector<std::pair<NodeIndex, NodeIndex>>& edges,
                               double alpha) {
  Eigen::MatrixXd at = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [from, to] : edges) at(to, from) += 1.0;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  double a = 1.0;
  for (std::size_t k = 1; k <= n; ++k) {
    power = power * at;
    a *= alpha;
    total += a * power.rowwise().sum();
  }
  return {total.data(), total.data() + n};
}

}  // namespace

TEST(KatzAlpha, MaxDegreeBound) {
  std::vector<PatentSpec> patents{{"hub", d("2000-01-01")}};
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < 3; ++i) {
    patents.push_back({"c" + std::to_string(i), d("2001-01-01") + i});
    edges.emplace_back(patents.back().id, "hub");
  }
  const auto dag = build_dag(make_store(patents, edges));
  const KatzAlpha a = katz_alpha(dag.full());
  EXPECT_DOUBLE_EQ(a.value, 0.25);
  EXPECT_FALSE(a.degenerate);

  const auto lonely = build_dag(make_store({{"x", d("2000-01-01")}}, {}));
  const KatzAlpha b = katz_alpha(lonely.full());
  EXPECT_EQ(b.value, 1.0);
  EXPECT_TRUE(b.degenerate);
}

TEST(KatzScores, ChainByHand) {
  const auto dag = build_dag(make_store(
      {{"a", d("2000-01-01")}, {"b", d("2005-01-01")}, {"c", d("2010-01-01")}}, {{"c", "b"}, {"b", "a"}}));
  const KatzSnapshot s = katz_scores(dag.full(), 0.5);
  EXPECT_DOUBLE_EQ(s.score(0), 0.75);
  EXPECT_DOUBLE_EQ(s.score(1), 0.5);
  EXPECT_DOUBLE_EQ(s.score(2), 0.0);
  EXPECT_EQ(s.max_walk_length, 2u);

  const KatzSnapshot e = katz_scores(dag.full(), 0.5, WalkOrientation::emitted);
  EXPECT_DOUBLE_EQ(e.score(2), 0.75);
  EXPECT_DOUBLE_EQ(e.score(0), 0.0);
}

TEST(KatzScores, MatchesDenseOracleOnRandomDags) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<std::pair<NodeIndex, NodeIndex>> edges;
    for (std::size_t k = 0; k < 3 * n; ++k) {
      const NodeIndex u = rng() % n, v = rng() % n;
      if (u > v) edges.emplace_back(u, v);  // multi-edges allowed
    }
    const double alpha = 0.05 + 0.2 * (rng() % 1000) / 1000.0;
    const auto got = katz_walk_scores(n, edges, alpha, WalkOrientation::received);
    const auto want = dense_katz(n, edges, alpha);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got[i], want[i], 1e-12 * (1.0 + want[i]));
  }
}

TEST(KatzScores, CycleIsRejected) {
  const std::vector<std::pair<NodeIndex, NodeIndex>> edges{{0, 1}, {1, 2}, {2, 0}};
  EXPECT_THROW(katz_walk_scores(3, edges, 0.1, WalkOrientation::received), std::invalid_argument);
}

TEST(KatzScores, MonotoneInAlpha) {
  std::mt19937_64 rng(3);
  std::vector<std::pair<NodeIndex, NodeIndex>> edges;
  for (int k = 0; k < 80; ++k) {
    const NodeIndex u = rng() % 30, v = rng() % 30;
    if (u > v) edges.emplace_back(u, v);
  }
  const auto lo = katz_walk_scores(30, edges, 0.05, WalkOrientation::received);
  const auto hi = katz_walk_scores(30, edges, 0.08, WalkOrientation::received);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_LE(lo[i], hi[i]);
}

TEST(YearlyKatz, OneSnapshotPerYearAndGrowsAtFixedAlpha) {
  const auto dag = build_dag(make_store(
      {{"a", d("2000-03-01")}, {"b", d("2005-06-01")}, {"c", d("2010-09-01")}}, {{"c", "b"}, {"b", "a"}}));
  const auto snaps = yearly_katz(dag, {.global_alpha = true});
  ASSERT_EQ(snaps.size(), 11u);
  EXPECT_EQ(snaps.front().year, 2000);
  EXPECT_EQ(snaps.back().year, 2010);
  for (std::size_t k = 1; k < snaps.size(); ++k) {
    EXPECT_EQ(snaps[k].alpha, snaps[0].alpha);
    for (NodeIndex i = 0; i < snaps[k - 1].scores.size(); ++i) EXPECT_GE(snaps[k].score(i), snaps[k - 1].score(i));
  }
  EXPECT_EQ(snaps[4].scores.size(), 1u);
  EXPECT_EQ(snaps[5].scores.size(), 2u);
  EXPECT_DOUBLE_EQ(snaps[10].score(0), 0.5 + 0.25);

  const auto per_year = yearly_katz(dag);
  EXPECT_TRUE(per_year[0].degenerate_alpha);
  EXPECT_DOUBLE_EQ(per_year[5].alpha, 0.5);
}

TEST(YearlyKatz, ThreadCountDoesNotChangeScores) {
  std::mt19937_64 rng(5);
  std::vector<PatentSpec> patents;
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < 300; ++i) {
    patents.push_back({"p" + std::to_string(i), d("1990-01-01") + i * 40});
    for (int k = 0; k < 3 && i > 0; ++k) edges.emplace_back(patents.back().id, "p" + std::to_string(rng() % i));
  }
  const auto dag = build_dag(make_store(patents, edges));
  const auto one = yearly_katz(dag, {.threads = 1});
  const auto four = yearly_katz(dag, {.threads = 4});
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t k = 0; k < one.size(); ++k) EXPECT_EQ(one[k].scores, four[k].scores);
}

TEST(KatzCsv, RoundTrip) {
  testing_support::TempDir dir("katz");
  const auto dag = build_dag(make_store(
      {{"a", d("2000-03-01")}, {"b", d("2005-06-01")}, {"c", d("2010-09-01")}}, {{"c", "b"}, {"b", "a"}}));
  const auto snaps = yearly_katz(dag);
  write_katz_csv(dag, snaps, dir / "katz.csv");
  const auto back = read_katz_csv(dag, dir / "katz.csv");
  ASSERT_EQ(back.size(), snaps.size());
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    EXPECT_EQ(back[k].year, snaps[k].year);
    EXPECT_EQ(back[k].alpha, snaps[k].alpha);
    EXPECT_EQ(back[k].scores, snaps[k].scores);
  }
}
