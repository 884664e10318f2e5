#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lmc::csv {

/// A parsed header-first table of unquoted comma-separated fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
std::vector<std::string> split(std::string_view line);
double to_double(std::string_view field);
long long to_int(std::string_view field);

/// Shortest representation that parses back to the same double.
std::string format(double value);

/// Writes `content` to a sibling temporary and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace lmc::csv
