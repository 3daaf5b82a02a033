#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace citerate::csv {

/// Splits one CSV line. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_line(std::string_view line);

std::string escape(std::string_view field);

/// Writes fields comma-separated with escaping and a trailing newline.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest text that parses back to the identical double.
std::string format_double(double value);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position of `name`; throws std::runtime_error naming the column.
  std::size_t column(std::string_view name) const;
};

/// Reads a headered CSV file. Blank lines are skipped. Throws
/// std::runtime_error when the file cannot be opened or a row has the wrong
/// number of fields.
Table read_file(const std::filesystem::path& path);

}  // namespace citerate::csv
