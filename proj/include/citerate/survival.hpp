#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citerate/events.hpp"

namespace citerate {

struct KmRow {
  double time = 0.0;  // days
  std::size_t n_risk = 0;
  std::size_t n_event = 0;
  std::size_t n_censored = 0;  // censored exactly at `time`
  double survival = 1.0;
};

/// Product-limit curve. Rows exist only at event times; S is 1 before the
/// first row and right-continuous.
struct KmCurve {
  std::string group = "all";
  std::size_t n = 0;
  std::vector<KmRow> rows;
  std::vector<std::string> warnings;

  double survival_at(double t) const;
};

struct Observation {
  double duration = 0.0;
  bool event = false;
};

/// Kaplan-Meier estimate. Censorings tied with events at the same time stay
/// in that time's risk set. Throws std::invalid_argument on empty input or
/// negative durations.
KmCurve km_fit(std::span<const Observation> observations);

/// Smallest t with S(t) <= 0.5; nullopt when the curve never gets there.
std::optional<double> km_median(const KmCurve& curve);

enum class KmPooling { all_spells, first_spell };

/// Curves of spell durations: "all" plus one per subdomain (a spell joins
/// every subdomain of its cited patent). `group` must be "subdomain" or a
/// single subdomain name. Empty subdomain groups are skipped.
std::vector<KmCurve> km_by_group(std::span<const SpellRecord> spells, std::string_view group,
                                 KmPooling pooling = KmPooling::all_spells);

/// Columns group, t_days, n_risk, n_event, survival.
void write_km_csv(const std::vector<KmCurve>& curves, const std::filesystem::path& path);

}  // namespace citerate
