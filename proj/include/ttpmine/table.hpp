#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace ttpmine {

using Json = nlohmann::json;

using Cell = std::variant<std::string, std::int64_t, double>;

/// Rectangular artifact rendered either as CSV or as a JSON array of objects.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    std::size_t column_index(std::string_view name) const;
    const std::string& text(std::size_t row, std::string_view column) const;
};

enum class OutputFormat { csv, json };

std::string cell_text(const Cell& cell);

std::string to_csv(const Table& table);
Json to_json(const Table& table);
std::string render(const Table& table, OutputFormat format);

/// Every parsed cell is a string; numeric interpretation is the caller's job.
Table parse_csv(std::string_view text);
Table table_from_json(const Json& rows, const std::vector<std::string>& columns);

/// Reads a table written by `render`, sniffing the format from the extension.
Table read_table(const std::filesystem::path& path, const std::vector<std::string>& columns);

/// Throws ValidationError unless `table` has exactly `columns` in order.
void require_columns(const Table& table, const std::vector<std::string>& columns,
                     std::string_view what);

/// Canonical JSON text: sorted keys, two-space indent, LF, trailing newline.
std::string canonical_json(const Json& value);

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Parses JSON text, mapping syntax errors to ParseError with the byte offset.
Json parse_json(std::string_view text, std::string_view what);

double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);

}  // namespace ttpmine
