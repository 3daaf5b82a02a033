#include "citerate/date.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace citerate {
namespace {

namespace chr = std::chrono;

const chr::sys_days kEpoch = chr::sys_days{chr::year{1841} / chr::January / 1};

Day to_day(chr::year_month_day ymd) {
  return static_cast<Day>((chr::sys_days{ymd} - kEpoch).count());
}

chr::year_month_day to_ymd(Day day) {
  return chr::year_month_day{kEpoch + chr::days{day}};
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

Day make_day(int year, unsigned month, unsigned day) {
  return to_day(chr::year{year} / chr::month{month} / chr::day{day});
}

std::optional<Day> parse_iso_date(std::string_view text) {
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  if (text.size() > 10 && text[10] != 'T' && text[10] != ' ') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
      !parse_int(text.substr(8, 2), d))
    return std::nullopt;
  if (m < 1 || d < 1) return std::nullopt;
  chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(m)},
                          chr::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return to_day(ymd);
}

std::string format_iso_date(Day day) {
  const auto ymd = to_ymd(day);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int year_of(Day day) { return static_cast<int>(to_ymd(day).year()); }

Day first_day_of_year(int year) { return make_day(year, 1, 1); }

Day last_day_of_year(int year) { return make_day(year, 12, 31); }

}  // namespace citerate
