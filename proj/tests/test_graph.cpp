#include <algorithm>
#include <map>
#include <queue>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "citerate/graph.hpp"
#include "support.hpp"

using namespace citerate;
using testing_support::make_store;
using testing_support::PatentSpec;

namespace {

Day d(const char* s) { return *parse_iso_date(s); }

/// Kahn peeling over ids, independent of the node numbering.
bool acyclic_by_peeling(const TemporalDag& dag) {
  std::map<std::string, int> indeg;
  std::multimap<std::string, std::string> out;
  for (NodeIndex i = 0; i < dag.node_count(); ++i) indeg[dag.id(i)];
  for (const auto& e : dag.edges()) {
    ++indeg[dag.id(e.cited)];
    out.emplace(dag.id(e.citing), dag.id(e.cited));
  }
  std::queue<std::string> ready;
  for (const auto& [id, k] : indeg)
    if (k == 0) ready.push(id);
  std::size_t seen = 0;
  while (!ready.empty()) {
    const std::string id = ready.front();
    ready.pop();
    ++seen;
    auto [lo, hi] = out.equal_range(id);
    for (auto it = lo; it != hi; ++it)
      if (--indeg[it->second] == 0) ready.push(it->second);
  }
  return seen == indeg.size();
}

}  // namespace

TEST(BuildDag, ChainIsInTopologicalOrder) {
  const auto store = make_store({{"c", d("2010-01-01")}, {"a", d("2000-01-01")}, {"b", d("2005-01-01")}},
                                {{"c", "b"}, {"b", "a"}});
  const TemporalDag dag = build_dag(store);
  EXPECT_EQ(dag.topo_order(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(dag.edge_count(), 2u);
  EXPECT_TRUE(dag.removed_edges().empty());
  EXPECT_EQ(dag.store_index(0), 1u);
}

TEST(BuildDag, ReciprocalSamePublicationResolvedByFiling) {
  const Day pub = d("2010-05-05");
  const auto store = make_store({{"x", pub, d("2009-03-01")}, {"y", pub, d("2008-01-01")}},
                                {{"x", "y"}, {"y", "x"}});
  const TemporalDag dag = build_dag(store);
  ASSERT_EQ(dag.edge_count(), 1u);
  EXPECT_EQ(dag.id(dag.edges()[0].citing), "x");
  ASSERT_EQ(dag.removed_edges().size(), 1u);
  const RemovedEdge& r = dag.removed_edges()[0];
  EXPECT_EQ(r.citing_id, "y");
  EXPECT_EQ(r.cited_id, "x");
  EXPECT_EQ(r.reason, RemovalReason::same_publication_filing);
}

TEST(BuildDag, IdenticalDatesFallBackToIdOrder) {
  const Day pub = d("2010-05-05");
  const auto store = make_store({{"q", pub}, {"p", pub}}, {{"p", "q"}, {"q", "p"}});
  const TemporalDag dag = build_dag(store);
  ASSERT_EQ(dag.removed_edges().size(), 1u);
  EXPECT_EQ(dag.removed_edges()[0].citing_id, "p");
  EXPECT_EQ(dag.removed_edges()[0].reason, RemovalReason::same_publication_id_order);
}

TEST(BuildDag, MissingFilingSortsLast) {
  const Day pub = d("2010-05-05");
  const auto store = make_store({{"a", pub}, {"b", pub, d("2009-01-01")}}, {{"a", "b"}, {"b", "a"}});
  const TemporalDag dag = build_dag(store);
  EXPECT_EQ(dag.topo_order(), (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(dag.removed_edges()[0].citing_id, "b");
}

TEST(BuildDag, CitingOlderThanCitedIsRemoved) {
  const auto store = make_store({{"old", d("2000-01-01")}, {"new", d("2001-01-01")}}, {{"old", "new"}});
  const TemporalDag dag = build_dag(store);
  EXPECT_EQ(dag.edge_count(), 0u);
  ASSERT_EQ(dag.removed_edges().size(), 1u);
  EXPECT_EQ(dag.removed_edges()[0].reason, RemovalReason::cites_later_publication);
}

TEST(BuildDag, RandomGraphsWithInjectedTwoCycles) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<PatentSpec> patents;
    std::uniform_int_distribution<int> day(0, 400);
    for (int i = 0; i < 50; ++i) patents.push_back({"n" + std::to_string(i), d("2000-01-01") + day(rng) * 7});
    // forward edges only (newer cites strictly older), then 5 reciprocal pairs
    std::set<std::pair<std::string, std::string>> edges;
    std::uniform_int_distribution<int> pick(0, 49);
    while (edges.size() < 100) {
      const auto& u = patents[pick(rng)];
      const auto& v = patents[pick(rng)];
      if (u.pub > v.pub) edges.insert({u.id, v.id});
    }
    std::vector<std::pair<std::string, std::string>> injected(edges.begin(), std::next(edges.begin(), 5));
    std::vector<std::pair<std::string, std::string>> all(edges.begin(), edges.end());
    for (const auto& [citing, cited] : injected) all.emplace_back(cited, citing);
    const TemporalDag dag = build_dag(make_store(patents, all));
    EXPECT_TRUE(acyclic_by_peeling(dag));
    ASSERT_EQ(dag.removed_edges().size(), 5u);
    for (const auto& r : dag.removed_edges()) {
      // the removed edge is the one the older patent makes to the newer one
      const Day from = dag.publication(*dag.index_of(r.citing_id));
      const Day to = dag.publication(*dag.index_of(r.cited_id));
      EXPECT_LT(from, to);
    }
    EXPECT_EQ(dag.edge_count() + dag.removed_edges().size(), all.size());
  }
}

TEST(Snapshot, BoundariesAndMonotonicity) {
  const auto store = make_store({{"a", d("2000-01-01")}, {"b", d("2005-01-01")}, {"c", d("2010-01-01")}},
                                {{"c", "b"}, {"b", "a"}, {"c", "a"}});
  const TemporalDag dag = build_dag(store);
  EXPECT_TRUE(dag.snapshot_at(d("1840-12-31")).empty());
  const DagView at_b = dag.snapshot_at(d("2005-01-01"));
  EXPECT_EQ(at_b.node_count(), 2u);
  ASSERT_EQ(at_b.edge_count(), 1u);
  EXPECT_EQ(dag.id(at_b.edges()[0].citing), "b");
  EXPECT_EQ(at_b.in_degree(0), 1u);

  const DagView last = dag.snapshot_at(d("2010-01-01"));
  const DagView full = dag.full();
  EXPECT_EQ(last.node_count(), full.node_count());
  EXPECT_EQ(last.edge_count(), full.edge_count());

  std::size_t prev_nodes = 0, prev_edges = 0;
  for (Day day = d("1999-12-01"); day <= d("2011-01-01"); day += 30) {
    const DagView v = dag.snapshot_at(day);
    EXPECT_GE(v.node_count(), prev_nodes);
    EXPECT_GE(v.edge_count(), prev_edges);
    for (const auto& e : v.edges()) {
      EXPECT_LE(e.day, day);
      EXPECT_TRUE(v.contains(e.citing));
    }
    prev_nodes = v.node_count();
    prev_edges = v.edge_count();
  }
}

TEST(Degrees, ChainAndStar) {
  const auto chain = build_dag(make_store(
      {{"a", d("2000-01-01")}, {"b", d("2005-01-01")}, {"c", d("2010-01-01")}}, {{"c", "b"}, {"b", "a"}}));
  const DegreeStats s = degree_stats(chain.full());
  EXPECT_EQ(s.in_degree, (std::vector<std::uint32_t>{1, 1, 0}));
  EXPECT_EQ(s.out_degree, (std::vector<std::uint32_t>{0, 1, 1}));

  std::vector<PatentSpec> patents{{"root", d("2000-01-01")}};
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < 5; ++i) {
    patents.push_back({"leaf" + std::to_string(i), d("2001-01-01") + i});
    edges.emplace_back(patents.back().id, "root");
  }
  const auto star = build_dag(make_store(patents, edges));
  const DegreeStats st = degree_stats(star.full());
  EXPECT_EQ(st.in_degree[0], 5u);
  std::size_t total_in = 0, total_out = 0;
  for (auto k : st.in_degree) total_in += k;
  for (auto k : st.out_degree) total_out += k;
  EXPECT_EQ(total_in, star.edge_count());
  EXPECT_EQ(total_out, star.edge_count());
  EXPECT_EQ(st.in_histogram.back(), (std::pair<std::uint32_t, std::size_t>{5, 1}));
}
