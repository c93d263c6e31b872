#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small text helpers: RFC-4180 CSV rows, "key = value" config files, and
// round-trip number formatting.
namespace flowcontrast::textio {

/// Reads one CSV record (possibly spanning lines inside quotes). Returns false
/// at end of input.
bool read_csv_row(std::istream& in, std::vector<std::string>& fields);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
std::string csv_escape(std::string_view field);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string trim(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');

/// Ordered key-value map parsed from lines of the form `key = value`.
/// Blank lines and lines starting with '#' are ignored.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace flowcontrast::textio
