#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace imexsim::csv {

/// Shortest decimal text that parses back to exactly the same double.
[[nodiscard]] std::string format_real(double value);

/// Strict parse of a full field; throws ConfigError on trailing garbage.
[[nodiscard]] double parse_real(std::string_view text);

/// Splits one CSV line on commas (no quoting; our files never need it).
[[nodiscard]] std::vector<std::string> split_line(std::string_view line);

[[nodiscard]] std::string join(const std::vector<std::string>& fields);

/// Parsed CSV file: '#' comment lines, one header row, numeric body.
struct Table {
    std::vector<std::string> comments;  // without the leading "# "
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

[[nodiscard]] Table read_numeric(const std::filesystem::path& path);

/// Writes text to `path` via a temporary sibling and a rename, so readers never
/// observe a half-written file.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace imexsim::csv
