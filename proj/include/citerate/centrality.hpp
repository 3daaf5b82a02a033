#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "citerate/graph.hpp"

namespace citerate {

/// Which walks a node collects. `received` counts walks that arrive at the
/// node along citing->cited edges (being cited by well-cited patents);
/// `emitted` counts walks that leave it.
enum class WalkOrientation { received, emitted };

struct KatzAlpha {
  double value = 1.0;
  bool degenerate = false;  // no edges in the view; value fixed at 1
};

/// alpha = 1 / (max over nodes of max(in-degree, out-degree) + 1), the
/// Gershgorin bound on the spectral radius.
KatzAlpha katz_alpha(const DagView& view);

struct KatzSnapshot {
  int year = 0;
  double alpha = 1.0;
  bool degenerate_alpha = false;
  std::vector<double> scores;  // by node index, size == view node count
  std::uint32_t max_walk_length = 0;

  double score(NodeIndex i) const { return i < scores.size() ? scores[i] : 0.0; }
};

/// Attenuated walk counts sum_k alpha^k * (walks of length k) on an
/// arbitrary directed edge list (from, to). Exact on acyclic input; throws
/// std::invalid_argument if a cycle is present.
std::vector<double> katz_walk_scores(std::size_t node_count,
                                     std::span<const std::pair<NodeIndex, NodeIndex>> edges,
                                     double alpha, WalkOrientation orientation,
                                     std::uint32_t* max_walk_length = nullptr);

/// Exact Katz scores on a DAG view by propagation in topological order.
KatzSnapshot katz_scores(const DagView& view, double alpha,
                         WalkOrientation orientation = WalkOrientation::received);

struct YearlyKatzOptions {
  /// Use the alpha of the complete DAG for every year instead of the
  /// per-snapshot alpha.
  bool global_alpha = false;
  WalkOrientation orientation = WalkOrientation::received;
  unsigned threads = 1;
};

/// One snapshot per calendar year from the first to the last publication
/// year, each taken at December 31.
std::vector<KatzSnapshot> yearly_katz(const TemporalDag& dag, const YearlyKatzOptions& options = {});

/// Columns year, patent_id, katz, alpha. Zero scores are omitted.
void write_katz_csv(const TemporalDag& dag, const std::vector<KatzSnapshot>& snapshots,
                    const std::filesystem::path& path);

/// Inverse of write_katz_csv; node counts per year are rebuilt from `dag`.
std::vector<KatzSnapshot> read_katz_csv(const TemporalDag& dag, const std::filesystem::path& path);

}  // namespace citerate
