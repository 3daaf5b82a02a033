#include "citerate/graph.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "citerate/csv.hpp"

namespace citerate {

std::string_view removal_reason_name(RemovalReason r) {
  switch (r) {
    case RemovalReason::cites_later_publication: return "cites_later_publication";
    case RemovalReason::same_publication_filing: return "same_publication_filing_order";
    case RemovalReason::same_publication_id_order: return "same_publication_id_order";
  }
  return "unknown";
}

std::optional<NodeIndex> TemporalDag::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const NodeIndex> TemporalDag::cites(NodeIndex i) const {
  return std::span<const NodeIndex>(out_targets_).subspan(out_offsets_[i],
                                                          out_offsets_[i + 1] - out_offsets_[i]);
}

std::span<const NodeIndex> TemporalDag::cited_by(NodeIndex i) const {
  return std::span<const NodeIndex>(in_sources_).subspan(in_offsets_[i],
                                                         in_offsets_[i + 1] - in_offsets_[i]);
}

DagView TemporalDag::full() const {
  return DagView(*this, static_cast<NodeIndex>(node_count()), edge_count());
}

DagView TemporalDag::snapshot_at(Day day) const {
  const auto n = static_cast<NodeIndex>(
      std::upper_bound(publication_.begin(), publication_.end(), day) - publication_.begin());
  return DagView(*this, n, out_offsets_[n]);
}

std::span<const NodeIndex> DagView::cited_by(NodeIndex i) const {
  auto all = dag_->cited_by(i);
  auto end = std::lower_bound(all.begin(), all.end(), node_count_);
  return all.first(static_cast<std::size_t>(end - all.begin()));
}

TemporalDag build_dag(const CorpusStore& store) {
  const auto& patents = store.patents();
  if (patents.size() >= std::numeric_limits<NodeIndex>::max())
    throw std::length_error("corpus too large for 32-bit node indices");

  std::vector<std::size_t> order(patents.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  constexpr Day kNoFiling = std::numeric_limits<Day>::max();
  auto key = [&](std::size_t i) {
    const Patent& p = patents[i];
    return std::tuple<Day, Day, const std::string&>(p.publication, p.filing.value_or(kNoFiling),
                                                    p.id);
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  TemporalDag dag;
  const std::size_t n = order.size();
  dag.ids_.reserve(n);
  dag.publication_.reserve(n);
  dag.store_index_ = order;
  for (std::size_t rank = 0; rank < n; ++rank) {
    const Patent& p = patents[order[rank]];
    dag.ids_.push_back(p.id);
    dag.publication_.push_back(p.publication);
    dag.index_.emplace(p.id, static_cast<NodeIndex>(rank));
  }

  for (const auto& e : store.edges()) {
    const NodeIndex u = dag.index_.at(e.citing_id);
    const NodeIndex v = dag.index_.at(e.cited_id);
    if (u > v) {
      dag.edges_.push_back({u, v, e.citation_date});
      continue;
    }
    const Patent& pu = patents[order[u]];
    const Patent& pv = patents[order[v]];
    RemovalReason reason = RemovalReason::cites_later_publication;
    if (pu.publication == pv.publication) {
      reason = pu.filing.value_or(kNoFiling) != pv.filing.value_or(kNoFiling)
                   ? RemovalReason::same_publication_filing
                   : RemovalReason::same_publication_id_order;
    }
    dag.removed_.push_back({e.citing_id, e.cited_id, e.citation_date, reason});
  }
  std::sort(dag.edges_.begin(), dag.edges_.end(), [](const DagEdge& a, const DagEdge& b) {
    return std::tie(a.citing, a.cited) < std::tie(b.citing, b.cited);
  });

  dag.out_offsets_.assign(n + 1, 0);
  dag.in_offsets_.assign(n + 1, 0);
  for (const auto& e : dag.edges_) {
    ++dag.out_offsets_[e.citing + 1];
    ++dag.in_offsets_[e.cited + 1];
  }
  std::partial_sum(dag.out_offsets_.begin(), dag.out_offsets_.end(), dag.out_offsets_.begin());
  std::partial_sum(dag.in_offsets_.begin(), dag.in_offsets_.end(), dag.in_offsets_.begin());
  dag.out_targets_.resize(dag.edges_.size());
  dag.in_sources_.resize(dag.edges_.size());
  std::vector<std::size_t> in_fill(dag.in_offsets_.begin(), dag.in_offsets_.end() - 1);
  for (std::size_t k = 0; k < dag.edges_.size(); ++k) {
    const auto& e = dag.edges_[k];
    dag.out_targets_[k] = e.cited;  // edges_ already grouped by citing
    dag.in_sources_[in_fill[e.cited]++] = e.citing;
  }
  // Edges are visited by ascending citing index, so each citer list is sorted.
  return dag;
}

DegreeStats degree_stats(const DagView& view) {
  DegreeStats s;
  const NodeIndex n = view.node_count();
  s.in_degree.resize(n);
  s.out_degree.resize(n);
  std::map<std::uint32_t, std::size_t> in_h, out_h;
  for (NodeIndex i = 0; i < n; ++i) {
    s.in_degree[i] = view.in_degree(i);
    s.out_degree[i] = view.out_degree(i);
    ++in_h[s.in_degree[i]];
    ++out_h[s.out_degree[i]];
  }
  s.in_histogram.assign(in_h.begin(), in_h.end());
  s.out_histogram.assign(out_h.begin(), out_h.end());
  return s;
}

void write_dag_csv(const TemporalDag& dag, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream nodes(dir / "nodes.csv", std::ios::binary);
  csv::write_row(nodes, {"rank", "id", "pub_date"});
  for (NodeIndex i = 0; i < dag.node_count(); ++i)
    csv::write_row(nodes, {std::to_string(i), dag.id(i), format_iso_date(dag.publication(i))});

  std::ofstream edges(dir / "edges.csv", std::ios::binary);
  csv::write_row(edges, {"citing_id", "cited_id", "citation_date"});
  for (const auto& e : dag.edges())
    csv::write_row(edges, {dag.id(e.citing), dag.id(e.cited), format_iso_date(e.day)});

  std::ofstream removed(dir / "removed_edges.csv", std::ios::binary);
  csv::write_row(removed, {"citing_id", "cited_id", "citation_date", "reason"});
  for (const auto& r : dag.removed_edges())
    csv::write_row(removed, {r.citing_id, r.cited_id, format_iso_date(r.day),
                             std::string(removal_reason_name(r.reason))});
  if (!nodes || !edges || !removed) throw std::runtime_error("write failed under " + dir.string());
}

void write_degree_csv(const DegreeStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  csv::write_row(out, {"direction", "degree", "count"});
  for (auto [d, c] : stats.in_histogram)
    csv::write_row(out, {"in", std::to_string(d), std::to_string(c)});
  for (auto [d, c] : stats.out_histogram)
    csv::write_row(out, {"out", std::to_string(d), std::to_string(c)});
}

}  // namespace citerate
