#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "citerate/coxph.hpp"
#include "citerate/report.hpp"
#include "citerate/survival.hpp"

namespace citerate {

inline constexpr std::array<std::string_view, 7> kStages{"ingest", "graph", "katz", "spells",
                                                         "km",     "fit",   "report"};

struct ModelDef {
  std::string name;
  std::vector<std::string> covariates;
  std::string baseline;  // omitted reference dummy, label only
  std::optional<TieMethod> ties;
};

enum class InputMode { csv, jsonl, simulate, fetch };

/// `key = value` lines; `#` starts a comment. Relative paths resolve
/// against the directory of the config file.
struct PipelineConfig {
  InputMode input = InputMode::csv;
  std::filesystem::path patents, edges, jsonl, sim_config;
  std::string endpoint = "https://api.lens.org/patent/search";
  std::optional<Day> horizon;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::vector<std::string> covariates;  // declared spec
  bool standardize_dummies = true;
  bool log_days = false;
  TieMethod ties = TieMethod::efron;
  TimeScale time_scale = TimeScale::calendar;
  bool robust = true;
  bool global_alpha = false;
  std::string km_group = "subdomain";
  KmPooling km_pooling = KmPooling::all_spells;
  TimeTransform schoenfeld_transform = TimeTransform::km;
  Nesting lr_nesting = Nesting::strict;
  std::vector<ModelDef> models;
  std::filesystem::path out = "out";
  std::filesystem::path cache;  // empty: <out>/.cache

  /// Throws std::invalid_argument with the line number on syntax errors and
  /// unknown keys.
  static PipelineConfig parse(std::istream& in, const std::filesystem::path& base_dir = ".");
  static PipelineConfig load(const std::filesystem::path& path);

  /// Checks that referenced inputs exist and every model covariate is
  /// declared. Throws std::invalid_argument naming the offender.
  void validate() const;
  std::filesystem::path cache_dir() const { return cache.empty() ? out / ".cache" : cache; }
};

struct StageRecord {
  std::string stage;
  bool ok = false;
  bool cache_hit = false;
  double seconds = 0.0;
  std::size_t records = 0;
  std::string digest;
  std::vector<ArtifactFile> files;  // paths relative to the output directory
  std::string error;
};

struct RunResult {
  int exit_code = 0;
  std::vector<StageRecord> stages;
  std::filesystem::path manifest;
};

/// Runs stages in order up to and including `last_stage`. Each stage is
/// skipped when its cache key (inputs, upstream digests and the relevant
/// config subset) is unchanged and its files are intact. Writes
/// <out>/manifest.json, also after a failure. One JSON object per line goes
/// to `log`.
RunResult run_pipeline(const PipelineConfig& config, std::ostream& log,
                       std::string_view last_stage = "report");

}  // namespace citerate
