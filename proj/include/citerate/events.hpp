#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "citerate/centrality.hpp"
#include "citerate/graph.hpp"
#include "citerate/ingest.hpp"

namespace citerate {

/// One interval at risk of a cited patent: from its publication or previous
/// citation to the next citation (event) or the horizon (censored).
struct SpellRecord {
  std::string cited_id;
  NodeIndex cited_node = 0;
  Day start = 0;
  Day stop = 0;
  bool event = false;
  std::optional<std::string> citing_id;  // present iff event
  SubdomainFlags cited_flags;
  SubdomainFlags citing_flags;
  bool first_spell = false;

  Day duration() const { return stop - start; }
};

enum class CovariateKind {
  storage,
  distribution,
  production,
  fuel_cells,
  days_after_publication,
  total_cpc_classes,
  shared_subdomain,
  katz_centrality,
};

std::string_view covariate_kind_name(CovariateKind k);
std::optional<CovariateKind> covariate_kind_from_name(std::string_view name);
bool is_dummy(CovariateKind k);

struct CovariateDef {
  std::string name;
  CovariateKind kind = CovariateKind::storage;
  bool standardize = true;  // false exempts the column (typically dummies)
  bool log_transform = false;  // log1p before standardization (days only)
  // Filled by standardize():
  bool standardized = false;
  bool degenerate = false;
  double mean = 0.0;
  double sd = 1.0;
};

struct CovariateSpec {
  std::vector<CovariateDef> covariates;

  /// All eight covariates, every one standardized.
  static CovariateSpec all();
  /// Named covariates; unknown names throw std::invalid_argument naming them.
  static CovariateSpec from_names(std::span<const std::string> names);

  const CovariateDef* find(std::string_view name) const;
  CovariateDef* find(std::string_view name);
};

/// Spells with one covariate column per spec entry.
struct SpellMatrix {
  std::vector<SpellRecord> spells;
  CovariateSpec spec;
  Eigen::MatrixXd values;  // spells.size() x spec.covariates.size()
  std::vector<std::string> warnings;

  std::vector<std::string> names() const;
  std::optional<Eigen::Index> column(std::string_view name) const;
};

struct SpellAccounting {
  std::size_t patents = 0;
  std::size_t citations = 0;  // kept citation edges received
  std::size_t events = 0;
  std::size_t censored = 0;
  std::size_t total() const { return events + censored; }
  /// events + censored == sum over patents of (citations received + 1)
  bool balanced() const { return events == citations && total() == citations + patents; }
};

/// Consecutive spells per patent in canonical (cited_id, start) order.
/// Throws std::invalid_argument if the horizon precedes a publication or
/// citation, std::logic_error if a citation predates the cited patent.
std::vector<SpellRecord> build_spells(const TemporalDag& dag, const CorpusStore& store, Day horizon);

SpellAccounting account(const TemporalDag& dag, std::span<const SpellRecord> spells);

/// Raw (unstandardized) covariates. Katz is taken from the latest snapshot
/// whose year precedes the spell's start year; 0 when there is none.
SpellMatrix attach_covariates(std::vector<SpellRecord> spells, const CorpusStore& store,
                              const TemporalDag& dag, std::span<const KatzSnapshot> katz,
                              CovariateSpec spec);

/// (x - mean) / sd with the population sd. Zero-variance columns are
/// removed from the matrix and spec with a warning. Columns with
/// standardize == false pass through untouched.
SpellMatrix standardize(SpellMatrix matrix);

/// Columns cited_id, start, stop, event, citing_id, then one per covariate.
/// The covariate spec (with standardization parameters) goes to a sidecar
/// JSON file `<path>.spec.json`.
void write_spell_csv(const SpellMatrix& matrix, const std::filesystem::path& path);
SpellMatrix read_spell_csv(const std::filesystem::path& path, const CorpusStore& store,
                           const TemporalDag& dag);

/// Stable digest over spell boundaries and covariate values.
std::string spell_digest(const SpellMatrix& matrix);

}  // namespace citerate
