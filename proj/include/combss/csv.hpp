#pragma once

#include "combss/types.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace combss::csv {

struct Table {
    std::vector<std::string> columns;
    MatrixXd values;
};

namespace detail_csv {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace detail_csv

// Header-aware numeric CSV reader. Missing or non-numeric cells are rejected
// with the row and column named; impute upstream before ingestion.
inline Table read_table(const std::string& filename) {
    std::ifstream in(filename);
    if (!in) throw ValidationError("cannot open input file: " + filename);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty CSV file: " + filename);
    Table table;
    table.columns = detail_csv::split_line(line);
    if (table.columns.empty()) throw ValidationError("CSV header has no columns: " + filename);
    for (const auto& name : table.columns)
        if (name.empty()) throw ValidationError("CSV header contains an empty column name");

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail_csv::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail_csv::split_line(line);
        if (cells.size() != table.columns.size())
            throw ValidationError(filename + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(table.columns.size()) + " cells, found " +
                                  std::to_string(cells.size()));
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& cell = cells[c];
            if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan")
                throw ValidationError(filename + ":" + std::to_string(lineno) + ": column '" +
                                      table.columns[c] +
                                      "' has a missing value; impute before ingestion");
            double value = 0.0;
            const char* begin = cell.data() + (cell[0] == '+' ? 1 : 0);  // from_chars rejects '+'
            const auto [ptr, ec] = std::from_chars(begin, cell.data() + cell.size(), value);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value))
                throw ValidationError(filename + ":" + std::to_string(lineno) + ": column '" +
                                      table.columns[c] + "' has non-numeric cell '" + cell + "'");
            row[c] = value;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("CSV file has no data rows: " + filename);

    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < rows[i].size(); ++c)
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    return table;
}

// 17 significant digits: doubles round-trip exactly through the text form.
inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_table(const std::string& filename, const std::vector<std::string>& columns,
                        const MatrixXd& values) {
    std::ofstream out(filename);
    if (!out) throw ValidationError("cannot open output file: " + filename);
    for (std::size_t c = 0; c < columns.size(); ++c)
        out << (c ? "," : "") << columns[c];
    out << "\n";
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index c = 0; c < values.cols(); ++c)
            out << (c ? "," : "") << format_value(values(i, c));
        out << "\n";
    }
    if (!out) throw ValidationError("failed while writing: " + filename);
}

// Mapping from the internal column order (mandatory first) back to the file's
// predictor order. original_index[i] is the 0-based position of internal
// column i among the file's predictor columns.
struct ColumnMap {
    std::vector<std::string> predictor_names;
    std::vector<int> original_index;
};

inline int label_from_cell(double value, Eigen::Index row, const std::string& column) {
    const double rounded = std::round(value);
    if (std::abs(value - rounded) > 1e-9)
        throw ValidationError("response column '" + column + "' row " + std::to_string(row + 1) +
                              " is not an integer label");
    return static_cast<int>(rounded);
}

// Assembles a Dataset from a parsed table: the named response column, the
// named mandatory predictors mapped to the leading positions, and every other
// column as a predictor in file order.
inline std::pair<Dataset, ColumnMap> make_dataset(const Table& table, const std::string& response,
                                                  const std::vector<std::string>& mandatory,
                                                  Family family) {
    const auto find_col = [&](const std::string& name) {
        const auto it = std::find(table.columns.begin(), table.columns.end(), name);
        if (it == table.columns.end())
            throw ValidationError("column '" + name + "' not found in the CSV header");
        return static_cast<int>(it - table.columns.begin());
    };
    const int response_col = find_col(response);

    std::vector<int> predictor_cols;  // file order, table indices
    for (int c = 0; c < static_cast<int>(table.columns.size()); ++c)
        if (c != response_col) predictor_cols.push_back(c);
    if (predictor_cols.empty())
        throw ValidationError("CSV has no predictor columns besides the response");

    std::vector<int> mandatory_cols;
    for (const auto& name : mandatory) {
        const int c = find_col(name);
        if (c == response_col)
            throw ValidationError("mandatory column '" + name + "' is the response column");
        if (std::find(mandatory_cols.begin(), mandatory_cols.end(), c) != mandatory_cols.end())
            throw ValidationError("mandatory column '" + name + "' listed twice");
        mandatory_cols.push_back(c);
    }

    std::vector<int> internal_order = mandatory_cols;
    for (int c : predictor_cols)
        if (std::find(mandatory_cols.begin(), mandatory_cols.end(), c) == mandatory_cols.end())
            internal_order.push_back(c);

    Dataset data;
    data.design.resize(table.values.rows(), static_cast<Eigen::Index>(internal_order.size()));
    ColumnMap map;
    for (std::size_t i = 0; i < internal_order.size(); ++i) {
        data.design.col(static_cast<Eigen::Index>(i)) = table.values.col(internal_order[i]);
        map.predictor_names.push_back(table.columns[static_cast<std::size_t>(internal_order[i])]);
        const auto pos = std::find(predictor_cols.begin(), predictor_cols.end(),
                                   internal_order[i]);
        map.original_index.push_back(static_cast<int>(pos - predictor_cols.begin()));
    }
    data.mandatory_count = static_cast<int>(mandatory_cols.size());

    data.response.resize(table.values.rows());
    int max_label = 0;
    for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
        const int label = label_from_cell(table.values(i, response_col), i, response);
        data.response[i] = label;
        max_label = std::max(max_label, label);
    }
    data.class_count = family == Family::logistic ? 2 : std::max(max_label, 2);
    validate_dataset(data, family);
    return {std::move(data), std::move(map)};
}

}  // namespace combss::csv
