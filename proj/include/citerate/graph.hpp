#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "citerate/date.hpp"
#include "citerate/ingest.hpp"

namespace citerate {

using NodeIndex = std::uint32_t;

/// Kept citation between node indices. Indices are positions in the
/// topological order, so cited < citing always holds.
struct DagEdge {
  NodeIndex citing = 0;
  NodeIndex cited = 0;
  Day day = 0;
};

enum class RemovalReason {
  cites_later_publication,    // citing published strictly before cited
  same_publication_filing,    // equal publication dates, filing date decides
  same_publication_id_order,  // equal publication and filing dates, id decides
};

std::string_view removal_reason_name(RemovalReason r);

struct RemovedEdge {
  std::string citing_id;
  std::string cited_id;
  Day day = 0;
  RemovalReason reason = RemovalReason::cites_later_publication;
};

class DagView;

/// Temporal citation DAG. Nodes are numbered by the total order
/// (publication, filing, id); every kept edge runs from a later node to an
/// earlier one, which makes the numbering itself the topological witness.
class TemporalDag {
 public:
  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  const std::string& id(NodeIndex i) const { return ids_[i]; }
  Day publication(NodeIndex i) const { return publication_[i]; }
  /// Position of the node's patent in the source CorpusStore.
  std::size_t store_index(NodeIndex i) const { return store_index_[i]; }
  std::optional<NodeIndex> index_of(std::string_view id) const;

  /// Kept edges sorted by (citing, cited).
  std::span<const DagEdge> edges() const { return edges_; }
  const std::vector<RemovedEdge>& removed_edges() const { return removed_; }

  /// Nodes cited by `i` / nodes citing `i`, both ascending.
  std::span<const NodeIndex> cites(NodeIndex i) const;
  std::span<const NodeIndex> cited_by(NodeIndex i) const;

  /// Ids oldest first.
  std::vector<std::string> topo_order() const { return ids_; }

  DagView full() const;
  /// Nodes published on or before `day` and edges cited on or before it.
  DagView snapshot_at(Day day) const;

 private:
  friend TemporalDag build_dag(const CorpusStore& store);

  std::vector<std::string> ids_;
  std::vector<Day> publication_;
  std::vector<std::size_t> store_index_;
  std::unordered_map<std::string, NodeIndex> index_;
  std::vector<DagEdge> edges_;
  std::vector<std::size_t> out_offsets_;
  std::vector<NodeIndex> out_targets_;
  std::vector<std::size_t> in_offsets_;
  std::vector<NodeIndex> in_sources_;
  std::vector<RemovedEdge> removed_;
};

/// Read-only time slice. Because nodes are ordered by publication, the
/// nodes of a snapshot form a prefix [0, node_count) and its edges form a
/// prefix of edges(). Views never outlive their TemporalDag.
class DagView {
 public:
  DagView(const TemporalDag& dag, NodeIndex node_count, std::size_t edge_count)
      : dag_(&dag), node_count_(node_count), edge_count_(edge_count) {}

  const TemporalDag& dag() const { return *dag_; }
  NodeIndex node_count() const { return node_count_; }
  std::size_t edge_count() const { return edge_count_; }
  bool empty() const { return node_count_ == 0; }
  bool contains(NodeIndex i) const { return i < node_count_; }

  std::span<const DagEdge> edges() const { return dag_->edges().first(edge_count_); }
  std::span<const NodeIndex> cites(NodeIndex i) const { return dag_->cites(i); }
  /// Citers of `i` inside the view.
  std::span<const NodeIndex> cited_by(NodeIndex i) const;

  std::uint32_t in_degree(NodeIndex i) const {
    return static_cast<std::uint32_t>(cited_by(i).size());
  }
  std::uint32_t out_degree(NodeIndex i) const {
    return static_cast<std::uint32_t>(cites(i).size());
  }

 private:
  const TemporalDag* dag_;
  NodeIndex node_count_;
  std::size_t edge_count_;
};

/// Orders patents by (publication, filing, id) and deletes every edge in
/// which the citing patent precedes the cited one. Missing filing dates sort
/// after present ones.
TemporalDag build_dag(const CorpusStore& store);

struct DegreeStats {
  std::vector<std::uint32_t> in_degree;   // by node index
  std::vector<std::uint32_t> out_degree;  // by node index
  std::vector<std::pair<std::uint32_t, std::size_t>> in_histogram;   // (degree, nodes)
  std::vector<std::pair<std::uint32_t, std::size_t>> out_histogram;  // (degree, nodes)
};

DegreeStats degree_stats(const DagView& view);

/// nodes.csv, edges.csv, removed_edges.csv under `dir`.
void write_dag_csv(const TemporalDag& dag, const std::filesystem::path& dir);
void write_degree_csv(const DegreeStats& stats, const std::filesystem::path& path);

}  // namespace citerate
