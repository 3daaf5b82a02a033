#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "citerate/ingest.hpp"

namespace citerate {

enum class CitationMode {
  attach,  // the citing patent is the next simulated arrival
  create,  // a fresh leaf patent is created at the citation time
};

/// Generator settings. Rates are citations per year; effects act on the
/// log hazard. The continuous covariate is the CPC class count, entering
/// as (count - cpc_mean) / cpc_sd.
struct SimConfig {
  std::size_t n_patents = 1000;
  Day start = make_day(2000, 1, 1);
  double horizon_years = 20.0;
  std::uint64_t seed = 1;
  std::map<Subdomain, double> base_rates{{Subdomain::storage, 0.5}};
  std::map<Subdomain, double> subdomain_weights;  // empty: uniform over base_rates
  double extra_flag_probability = 0.0;            // chance of each additional flag
  std::map<Subdomain, double> flag_effects;
  double cpc_effect = 0.0;
  double cpc_mean = 3.0;  // mean CPC class count, >= 1
  CitationMode mode = CitationMode::attach;
  double inherit_probability = 0.0;  // prefer a citer sharing a subdomain
  double weibull_shape = 1.0;
  /// Days after start at which every effect changes sign.
  std::optional<double> effect_reversal_day;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  double cpc_sd() const;
  Day horizon() const;

  static SimConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline constexpr const char* kSimGenerator = "mt19937_64";

struct SimResult {
  CorpusStore store;
  Day horizon = 0;
  std::size_t events = 0;
  std::vector<std::string> warnings;
};

/// Same seed, same config: identical corpus. Every citation points to an
/// earlier patent, so the result is acyclic with no reordering needed.
SimResult simulate(const SimConfig& config);

struct SimTruth {
  std::map<std::string, double> beta;           // by covariate name
  std::map<std::string, double> hazard_ratio;   // exp(beta)
  std::map<std::string, double> base_rate;      // per year, by subdomain
  std::map<std::string, double> median_years;   // ln 2 / rate at x = 0
  double cpc_mean = 0.0;
  double cpc_sd = 0.0;
  std::string generator = kSimGenerator;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

SimTruth known_truth(const SimConfig& config);

/// Writes patents.csv, edges.csv and truth.json into `dir`.
void write_simulation(const SimConfig& config, const SimResult& result,
                      const std::filesystem::path& dir);

}  // namespace citerate
