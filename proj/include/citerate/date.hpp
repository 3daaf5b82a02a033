#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace citerate {

/// Calendar date as whole days since 1841-01-01 (day 0). Durations are day
/// differences. Dates before the epoch are negative.
using Day = std::int32_t;

inline constexpr double kDaysPerYear = 365.25;

Day make_day(int year, unsigned month, unsigned day);

/// Parses "YYYY-MM-DD"; anything after the tenth character (a time part) is
/// ignored. Returns nullopt on malformed or impossible dates.
std::optional<Day> parse_iso_date(std::string_view text);

std::string format_iso_date(Day day);

int year_of(Day day);
Day first_day_of_year(int year);
Day last_day_of_year(int year);

inline double days_to_years(double days) { return days / kDaysPerYear; }

}  // namespace citerate
