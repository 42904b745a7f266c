#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ecgbench {

// One parsed delimited-text table: a header row plus data rows of equal width.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a column by exact name, or nullopt.
    std::optional<std::size_t> find(std::string_view name) const;
    // First matching alias, or nullopt.
    std::optional<std::size_t> find_any(std::initializer_list<std::string_view> names) const;
};

// RFC 4180 style: fields may be double-quoted, "" escapes a quote, quoted
// fields may contain delimiters and newlines. A UTF-8 BOM is skipped.
CsvTable parse_csv(std::string_view text, char delimiter = ',');
CsvTable read_csv(const std::filesystem::path& path, char delimiter = ',');

// Quotes a field only if it needs it.
std::string csv_escape(std::string_view field, char delimiter = ',');

std::string read_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

// Writes via a temporary sibling file and renames it into place, so readers
// never observe a partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delimiter);

// Locale-independent number parsing; the whole (trimmed) string must be consumed.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Shortest decimal representation that round-trips (locale-independent).
std::string format_double(double v);

// Little-endian binary helpers.
void put_u64(std::string& out, std::uint64_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);
std::uint64_t get_u64(const std::uint8_t* p);
std::uint32_t get_u32(const std::uint8_t* p);
float get_f32(const std::uint8_t* p);
double get_f64(const std::uint8_t* p);

}  // namespace ecgbench
