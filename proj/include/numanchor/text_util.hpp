#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace numanchor {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);
/// printf-style fixed formatting, e.g. format_fixed(2.0, 4) == "2.0000".
std::string format_fixed(double value, int decimals);

std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string_view> split(std::string_view text, char sep);
/// Splits on runs of ASCII whitespace.
std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string_view trim(std::string_view text);

std::size_t parse_size(std::string_view text);
double parse_double(std::string_view text);

/// Byte offset of the first malformed UTF-8 sequence, if any.
std::optional<std::size_t> first_invalid_utf8(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace numanchor
