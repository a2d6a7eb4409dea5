#include "ttpmine/table.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ttpmine/common.hpp"
#include "ttpmine/error.hpp"

namespace ttpmine {

namespace {

bool needs_quotes(std::string_view field) {
    return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

void append_field(std::string& out, std::string_view field) {
    if (!needs_quotes(field)) {
        out += field;
        return;
    }
    out += '"';
    for (const char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
}

}  // namespace

std::size_t Table::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) {
            return i;
        }
    }
    throw ValidationError(fmt::format("missing column '{}'", name));
}

const std::string& Table::text(std::size_t row, std::string_view column) const {
    const auto& cell = rows.at(row).at(column_index(column));
    if (const auto* s = std::get_if<std::string>(&cell)) {
        return *s;
    }
    throw ValidationError(fmt::format("column '{}' is not textual", column));
}

std::string cell_text(const Cell& cell) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return v;
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(v);
            } else {
                return format_number(v);
            }
        },
        cell);
}

std::string to_csv(const Table& table) {
    std::string out;
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        append_field(out, table.columns[i]);
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) {
                out += ',';
            }
            append_field(out, cell_text(row[i]));
        }
        out += '\n';
    }
    return out;
}

Json to_json(const Table& table) {
    Json rows = Json::array();
    for (const auto& row : table.rows) {
        Json object = Json::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::visit([&](const auto& v) { object[table.columns[i]] = v; }, row[i]);
        }
        rows.push_back(std::move(object));
    }
    return rows;
}

std::string render(const Table& table, OutputFormat format) {
    return format == OutputFormat::csv ? to_csv(table) : canonical_json(to_json(table));
}

Table parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty()) {
                    throw ValidationError(fmt::format("CSV: stray quote at byte {}", i));
                }
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                break;
            default:
                field += c;
                field_started = true;
        }
    }
    if (in_quotes) {
        throw ValidationError("CSV: unterminated quoted field");
    }
    if (field_started || !record.empty()) {
        end_record();
    }

    Table table;
    if (records.empty()) {
        return table;
    }
    table.columns = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        auto& raw = records[r];
        if (raw.size() == 1 && raw.front().empty()) {
            continue;
        }
        if (raw.size() != table.columns.size()) {
            throw ValidationError(fmt::format("CSV: row {} has {} fields, expected {}", r + 1,
                                              raw.size(), table.columns.size()));
        }
        std::vector<Cell> row;
        row.reserve(raw.size());
        for (auto& f : raw) {
            row.emplace_back(std::move(f));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

Table table_from_json(const Json& rows, const std::vector<std::string>& columns) {
    if (!rows.is_array()) {
        throw SchemaError("expected a JSON array of row objects");
    }
    Table table;
    table.columns = columns;
    for (const auto& object : rows) {
        if (!object.is_object()) {
            throw SchemaError("expected a JSON object per row");
        }
        std::vector<Cell> row;
        for (const auto& column : columns) {
            const auto it = object.find(column);
            if (it == object.end()) {
                throw SchemaError(fmt::format("row is missing key '{}'", column));
            }
            if (it->is_string()) {
                row.emplace_back(it->get<std::string>());
            } else if (it->is_number_integer()) {
                row.emplace_back(std::to_string(it->get<std::int64_t>()));
            } else if (it->is_number()) {
                row.emplace_back(format_number(it->get<double>()));
            } else {
                throw SchemaError(fmt::format("key '{}' must be a string or number", column));
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

Table read_table(const std::filesystem::path& path, const std::vector<std::string>& columns) {
    const auto text = read_file(path);
    Table table;
    if (path.extension() == ".json") {
        table = table_from_json(parse_json(text, path.string()), columns);
    } else {
        table = parse_csv(text);
    }
    require_columns(table, columns, path.string());
    return table;
}

void require_columns(const Table& table, const std::vector<std::string>& columns,
                     std::string_view what) {
    if (table.columns != columns) {
        throw ValidationError(fmt::format("{}: header must be '{}'", what, fmt::join(columns, ",")));
    }
}

std::string canonical_json(const Json& value) {
    // nlohmann::json stores objects in std::map, so keys come out sorted.
    return value.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError(fmt::format("cannot open input file: {}", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return std::move(buffer).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError(fmt::format("cannot write {}", tmp.string()));
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw IoError(fmt::format("short write to {}", tmp.string()));
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError(fmt::format("cannot move {} into place", path.string()));
    }
}

Json parse_json(std::string_view text, std::string_view what) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        throw ParseError(fmt::format("{}: malformed JSON at byte {}: {}", what, e.byte, e.what()),
                         e.byte);
    }
}

double parse_double(std::string_view text, std::string_view what) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ValidationError(fmt::format("{}: '{}' is not a number", what, text));
    }
    return value;
}

std::int64_t parse_int(std::string_view text, std::string_view what) {
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ValidationError(fmt::format("{}: '{}' is not an integer", what, text));
    }
    return value;
}

}  // namespace ttpmine
