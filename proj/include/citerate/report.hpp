#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "citerate/coxph.hpp"
#include "citerate/events.hpp"
#include "citerate/graph.hpp"
#include "citerate/ingest.hpp"
#include "citerate/survival.hpp"

namespace citerate {

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Throws std::invalid_argument on empty input.
SummaryStats summarize(std::vector<double> values);

struct DescriptiveRow {
  std::string table;    // "patents" or "spells"
  std::string section;  // grouping inside the table
  std::string variable;
  SummaryStats stats;
  bool is_date = false;  // values are Day numbers; mean/median/min/max print as dates
};

/// Patent table: subdomain flags, publication date, CPC class count, in- and
/// out-degree. Spell table: days after previous event, previous-event and
/// event dates, cited-patent flags, CPC classes and Katz per spell, event
/// proportion and shared subdomain (events only and all spells).
/// A standardized Katz column is mapped back to its raw scale. Throws
/// std::runtime_error naming the stage to run when an input is empty.
std::vector<DescriptiveRow> descriptives(const CorpusStore& store, const TemporalDag& dag,
                                         const SpellMatrix& spells);

struct YearlyCount {
  int year = 0;
  std::size_t patents = 0;
  std::size_t citations = 0;  // kept citations made that year
};

std::vector<YearlyCount> yearly_counts(const TemporalDag& dag);

/// "***" for p <= 0.0001, "**" for p <= 0.001, "*" for p <= 0.01.
std::string significance_stars(double p);

struct CoefficientRow {
  std::string model;
  std::string covariate;
  double beta = 0.0;
  double hazard_ratio = 1.0;
  double se = 0.0;
  std::optional<double> robust_se;
  double z = 0.0;
  double p_value = 1.0;
  std::string stars;
  double ci_low = 0.0;  // exp(beta - 1.96 se), se robust when available
  double ci_high = 0.0;
};

std::vector<CoefficientRow> coefficient_rows(std::string_view model, const FitResult& fit);

struct NamedFit {
  std::string name;
  FitResult fit;
};

struct LrRow {
  std::string restricted;
  std::string full;
  LrTest test;
};

struct ModelComparison {
  std::vector<std::string> models;
  std::vector<std::string> covariates;                       // union, first-seen order
  std::vector<std::vector<std::optional<CoefficientRow>>> cells;  // [covariate][model]
  std::vector<std::size_t> observations;
  std::vector<std::size_t> events;
  std::vector<double> loglik;
  std::vector<LrRow> lr_tests;  // each model against its predecessor
};

/// Needs at least two fits on the same spell matrix (std::invalid_argument
/// otherwise). Under strict nesting, pairs whose smaller model is not a
/// subset of the larger get no LR row; quasi nesting tests them anyway.
ModelComparison model_comparison(std::span<const NamedFit> fits, Nesting nesting = Nesting::strict);

void write_descriptives_csv(const std::vector<DescriptiveRow>& rows, const std::filesystem::path& path);
void write_yearly_counts_csv(const std::vector<YearlyCount>& rows, const std::filesystem::path& path);
/// Long format: one row per model and covariate.
void write_fit_csv(std::span<const NamedFit> fits, const std::filesystem::path& path);
/// Wide format: "HR (robust SE)" with stars, empty where a model lacks the
/// covariate, then observation, event, log-likelihood and LR rows.
void write_comparison_csv(const ModelComparison& comparison, const std::filesystem::path& path);

nlohmann::json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

struct ArtifactFile {
  std::string path;  // relative to the manifest's directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

/// Digest record for files under `root`, sorted by path.
std::vector<ArtifactFile> describe_files(const std::filesystem::path& root,
                                         std::span<const std::filesystem::path> files);

struct ReportInputs {
  const CorpusStore* store = nullptr;
  const TemporalDag* dag = nullptr;
  const SpellMatrix* spells = nullptr;
  const std::vector<KmCurve>* km = nullptr;
  std::span<const NamedFit> fits;
  std::vector<std::pair<std::string, std::string>> provenance;  // (input, sha256)
  Nesting nesting = Nesting::strict;
};

/// Writes descriptives.csv, yearly_counts.csv, degree_hist.csv,
/// km_curves.csv, fits.csv, comparison.csv and manifest.json into `dir`.
/// comparison.csv is only meaningful with two or more fits; with one it
/// holds that fit alone. Returns the written files.
std::vector<std::filesystem::path> write_report(const ReportInputs& inputs, const std::filesystem::path& dir);

}  // namespace citerate
