#include "mamkl/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "mamkl/types.hpp"

namespace mamkl::csv {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string where(const Table& table, const Row& row) {
    return table.path.string() + ":" + std::to_string(row.line);
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DataError(path.string() + ": missing column '" + std::string(name) + "'");
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Table table;
    table.path = path;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        if (!have_header) {
            table.header = split(line);
            have_header = true;
            continue;
        }
        table.rows.push_back(Row{lineno, split(line)});
    }
    if (!have_header) throw DataError(path.string() + ": empty file (no header)");
    return table;
}

double parse_double(const std::string& cell, const Table& table, const Row& row, bool* empty) {
    if (empty) *empty = cell.empty();
    if (cell.empty()) {
        if (empty) return std::nan("");
        throw DataError(where(table, row) + ": empty numeric cell");
    }
    double value = 0.0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        throw DataError(where(table, row) + ": not a number: '" + cell + "'");
    }
    return value;
}

long long parse_int(const std::string& cell, const Table& table, const Row& row) {
    long long value = 0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (cell.empty() || ec != std::errc{} || ptr != end) {
        throw DataError(where(table, row) + ": not an integer: '" + cell + "'");
    }
    return value;
}

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

}  // namespace mamkl::csv
