#include "citerate/centrality.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

#include "citerate/csv.hpp"

namespace citerate {

KatzAlpha katz_alpha(const DagView& view) {
  std::uint32_t max_degree = 0;
  for (NodeIndex i = 0; i < view.node_count(); ++i)
    max_degree = std::max({max_degree, view.in_degree(i), view.out_degree(i)});
  if (max_degree == 0) return {1.0, true};
  return {1.0 / (static_cast<double>(max_degree) + 1.0), false};
}

std::vector<double> katz_walk_scores(std::size_t node_count,
                                     std::span<const std::pair<NodeIndex, NodeIndex>> edges,
                                     double alpha, WalkOrientation orientation,
                                     std::uint32_t* max_walk_length) {
  // Walks are propagated along (src -> dst); for emitted walks the edges are
  // reversed so that the score still accumulates at the walk's endpoint.
  std::vector<std::vector<NodeIndex>> next(node_count);
  std::vector<std::size_t> indegree(node_count, 0);
  for (auto [from, to] : edges) {
    if (from >= node_count || to >= node_count) throw std::out_of_range("edge endpoint out of range");
    const NodeIndex src = orientation == WalkOrientation::received ? from : to;
    const NodeIndex dst = orientation == WalkOrientation::received ? to : from;
    next[src].push_back(dst);
    ++indegree[dst];
  }
  std::vector<NodeIndex> queue;
  queue.reserve(node_count);
  for (NodeIndex i = 0; i < node_count; ++i)
    if (indegree[i] == 0) queue.push_back(i);
  std::vector<double> score(node_count, 0.0);
  std::vector<std::uint32_t> depth(node_count, 0);
  std::uint32_t longest = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const NodeIndex u = queue[head];
    const double carried = alpha * (1.0 + score[u]);
    for (NodeIndex v : next[u]) {
      score[v] += carried;
      depth[v] = std::max(depth[v], depth[u] + 1);
      longest = std::max(longest, depth[v]);
      if (--indegree[v] == 0) queue.push_back(v);
    }
  }
  if (queue.size() != node_count)
    throw std::invalid_argument("Katz propagation requires an acyclic graph");
  if (max_walk_length) *max_walk_length = longest;
  return score;
}

KatzSnapshot katz_scores(const DagView& view, double alpha, WalkOrientation orientation) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  KatzSnapshot snap;
  snap.alpha = alpha;
  const NodeIndex n = view.node_count();
  snap.scores.assign(n, 0.0);
  std::vector<std::uint32_t> depth(n, 0);
  // Node numbering is topological with cited < citing.
  if (orientation == WalkOrientation::received) {
    for (NodeIndex j = n; j-- > 0;) {
      const double carried = alpha * (1.0 + snap.scores[j]);
      for (NodeIndex i : view.cites(j)) {
        snap.scores[i] += carried;
        depth[i] = std::max(depth[i], depth[j] + 1);
      }
    }
  } else {
    for (NodeIndex i = 0; i < n; ++i) {
      const double carried = alpha * (1.0 + snap.scores[i]);
      for (NodeIndex j : view.cited_by(i)) {
        snap.scores[j] += carried;
        depth[j] = std::max(depth[j], depth[i] + 1);
      }
    }
  }
  snap.max_walk_length = n ? *std::max_element(depth.begin(), depth.end()) : 0;
  return snap;
}

std::vector<KatzSnapshot> yearly_katz(const TemporalDag& dag, const YearlyKatzOptions& options) {
  std::vector<KatzSnapshot> out;
  if (dag.node_count() == 0) return out;
  const int first = year_of(dag.publication(0));
  const int last = year_of(dag.publication(static_cast<NodeIndex>(dag.node_count() - 1)));
  out.resize(static_cast<std::size_t>(last - first + 1));
  const KatzAlpha global = katz_alpha(dag.full());

  auto compute = [&](std::size_t k) {
    const int year = first + static_cast<int>(k);
    const DagView view = dag.snapshot_at(last_day_of_year(year));
    const KatzAlpha a = options.global_alpha ? global : katz_alpha(view);
    KatzSnapshot snap = katz_scores(view, a.value, options.orientation);
    snap.year = year;
    snap.degenerate_alpha = a.degenerate;
    out[k] = std::move(snap);
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, out.size()));
  if (threads == 1) {
    for (std::size_t k = 0; k < out.size(); ++k) compute(k);
    return out;
  }
  // Each worker owns a fixed stride of years, so results do not depend on
  // scheduling.
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t k = t; k < out.size(); k += threads) compute(k);
    });
  for (auto& th : pool) th.join();
  return out;
}

void write_katz_csv(const TemporalDag& dag, const std::vector<KatzSnapshot>& snapshots,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::write_row(out, {"year", "patent_id", "katz", "alpha"});
  for (const auto& s : snapshots) {
    const std::string year = std::to_string(s.year), alpha = csv::format_double(s.alpha);
    for (NodeIndex i = 0; i < s.scores.size(); ++i)
      if (s.scores[i] != 0.0) csv::write_row(out, {year, dag.id(i), csv::format_double(s.scores[i]), alpha});
    // A year without any nonzero score still records its alpha.
    if (std::all_of(s.scores.begin(), s.scores.end(), [](double v) { return v == 0.0; }))
      csv::write_row(out, {year, "", "0", alpha});
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<KatzSnapshot> read_katz_csv(const TemporalDag& dag, const std::filesystem::path& path) {
  const csv::Table t = csv::read_file(path);
  const auto c_year = t.column("year"), c_id = t.column("patent_id"), c_k = t.column("katz"),
             c_a = t.column("alpha");
  std::map<int, KatzSnapshot> by_year;
  for (const auto& row : t.rows) {
    const int year = std::stoi(row[c_year]);
    auto [it, fresh] = by_year.try_emplace(year);
    KatzSnapshot& s = it->second;
    if (fresh) {
      s.year = year;
      s.alpha = std::stod(row[c_a]);
      const DagView view = dag.snapshot_at(last_day_of_year(year));
      s.scores.assign(view.node_count(), 0.0);
      s.degenerate_alpha = katz_alpha(view).degenerate;
    }
    if (row[c_id].empty()) continue;
    auto idx = dag.index_of(row[c_id]);
    if (!idx || *idx >= s.scores.size())
      throw std::runtime_error("Katz row for unknown patent '" + row[c_id] + "' in " + path.string());
    s.scores[*idx] = std::stod(row[c_k]);
  }
  std::vector<KatzSnapshot> out;
  for (auto& [year, s] : by_year) out.push_back(std::move(s));
  return out;
}

}  // namespace citerate
