#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace flowcouple {

// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_text_file(const std::filesystem::path& path);

// Splits on commas; trims surrounding whitespace. No quoting support, none
// of our formats need it.
std::vector<std::string> split_csv_line(std::string_view line);

// Strict numeric parse of a whole field. Returns false on trailing garbage.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);
bool parse_uint(std::string_view text, std::uint64_t& out);

// Shortest representation that parses back to the same double.
std::string format_exact(double v);

// Fixed-point with `decimals` digits.
std::string format_fixed(double v, int decimals);

} // namespace flowcouple
