#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robusta/common.hpp"

namespace robusta {

enum class ColumnKind { continuous, discrete, categorical };

std::string to_string(ColumnKind kind);
ColumnKind column_kind_from_string(const std::string& s);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<std::string> categories; // categorical columns only

    // Index of a category name; throws InvalidInputError if unknown.
    int category_index(const std::string& cat) const;
};

// Observation table with mixed-type columns and one scalar target per row.
// Cells are stored as doubles; categorical cells hold the category index.
struct Dataset {
    std::vector<ColumnSpec> columns;
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    std::string target_name = "target";

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_cols() const { return columns.size(); }

    void add_row(std::vector<double> row, double target);

    // Enforces the table invariants: consistent widths, integral discrete
    // entries, in-vocabulary categorical entries, finite targets, K >= 1.
    void validate() const;

    // CSV with a header row plus a JSON sidecar schema declaring column
    // kinds, category vocabularies and the target column name.
    static Dataset load(const std::filesystem::path& csv,
                        const std::filesystem::path& schema);
    static Dataset from_csv_text(const std::string& csv_text,
                                 const std::string& schema_json);
    void save_csv(const std::filesystem::path& csv) const;
    std::string schema_json() const;
};

// Minimal CSV support: header row, comma separation, double-quote quoting.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_escape(const std::string& field);

} // namespace robusta
