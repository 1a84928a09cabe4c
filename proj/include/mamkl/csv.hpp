#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mamkl::csv {

// Plain comma-separated rows; quoting is not supported.
struct Row {
    std::size_t line = 0;  // 1-based line number in the source file
    std::vector<std::string> cells;
};

struct Table {
    std::filesystem::path path;
    std::vector<std::string> header;
    std::vector<Row> rows;

    // Index of a header column; throws DataError when absent.
    std::size_t column(std::string_view name) const;
};

std::vector<std::string> split(std::string_view line);

// Reads a headed CSV. Blank lines are skipped.
Table read(const std::filesystem::path& path);

// Parses a finite double; empty cells are reported through `empty`.
double parse_double(const std::string& cell, const Table& table, const Row& row, bool* empty = nullptr);
long long parse_int(const std::string& cell, const Table& table, const Row& row);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace mamkl::csv
