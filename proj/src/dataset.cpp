#include "robusta/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace robusta {

using nlohmann::json;

std::string to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::continuous: return "continuous";
        case ColumnKind::discrete: return "discrete";
        case ColumnKind::categorical: return "categorical";
    }
    return "?";
}

ColumnKind column_kind_from_string(const std::string& s) {
    if (s == "continuous") return ColumnKind::continuous;
    if (s == "discrete") return ColumnKind::discrete;
    if (s == "categorical") return ColumnKind::categorical;
    throw InvalidInputError("unknown column kind '" + s + "'");
}

int ColumnSpec::category_index(const std::string& cat) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
        if (categories[i] == cat) return static_cast<int>(i);
    throw InvalidInputError("category '" + cat + "' not in vocabulary of column '" + name + "'");
}

void Dataset::add_row(std::vector<double> row, double target) {
    rows.push_back(std::move(row));
    targets.push_back(target);
}

void Dataset::validate() const {
    if (rows.empty()) throw InvalidInputError("dataset is empty");
    if (rows.size() != targets.size())
        throw InvalidInputError("row/target count mismatch");
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != columns.size())
            throw InvalidInputError("row " + std::to_string(r) + " has wrong width");
        if (!std::isfinite(targets[r]))
            throw InvalidInputError("non-finite target in row " + std::to_string(r));
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const double v = rows[r][c];
            if (!std::isfinite(v))
                throw InvalidInputError("non-finite value in row " + std::to_string(r));
            if (columns[c].kind == ColumnKind::discrete && v != std::floor(v))
                throw InvalidInputError("non-integer value in discrete column '" + columns[c].name + "'");
            if (columns[c].kind == ColumnKind::categorical) {
                const auto n = static_cast<double>(columns[c].categories.size());
                if (v != std::floor(v) || v < 0 || v >= n)
                    throw InvalidInputError("category index out of range in column '" + columns[c].name + "'");
            }
        }
    }
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> field_row;
    std::string field;
    bool in_quotes = false;
    bool row_has_data = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') { field += '"'; ++i; }
                else in_quotes = false;
            } else field += ch;
        } else if (ch == '"') {
            in_quotes = true;
            row_has_data = true;
        } else if (ch == ',') {
            field_row.push_back(std::move(field));
            field.clear();
            row_has_data = true;
        } else if (ch == '\n' || ch == '\r') {
            if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (row_has_data || !field.empty()) {
                field_row.push_back(std::move(field));
                field.clear();
                out.push_back(std::move(field_row));
                field_row.clear();
                row_has_data = false;
            }
        } else {
            field += ch;
            row_has_data = true;
        }
    }
    if (row_has_data || !field.empty()) {
        field_row.push_back(std::move(field));
        out.push_back(std::move(field_row));
    }
    return out;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInputError("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidInputError("cannot parse number '" + s + "' in " + where);
    }
}

} // namespace

Dataset Dataset::from_csv_text(const std::string& csv_text, const std::string& schema_json) {
    json schema;
    try {
        schema = json::parse(schema_json);
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("schema JSON parse failure: ") + e.what());
    }

    Dataset ds;
    if (!schema.contains("columns") || !schema["columns"].is_array())
        throw InvalidInputError("schema must declare a 'columns' array");
    for (const auto& col : schema["columns"]) {
        ColumnSpec spec;
        spec.name = col.at("name").get<std::string>();
        spec.kind = column_kind_from_string(col.at("kind").get<std::string>());
        if (spec.kind == ColumnKind::categorical) {
            if (!col.contains("categories"))
                throw InvalidInputError("categorical column '" + spec.name + "' needs a category vocabulary");
            spec.categories = col["categories"].get<std::vector<std::string>>();
            if (spec.categories.empty())
                throw InvalidInputError("empty vocabulary for column '" + spec.name + "'");
        }
        ds.columns.push_back(std::move(spec));
    }
    ds.target_name = schema.value("target", std::string("target"));

    const auto cells = parse_csv(csv_text);
    if (cells.empty()) throw InvalidInputError("dataset CSV is empty");
    const auto& header = cells.front();

    std::vector<int> col_pos(ds.columns.size(), -1);
    int target_pos = -1;
    for (std::size_t h = 0; h < header.size(); ++h) {
        if (header[h] == ds.target_name) target_pos = static_cast<int>(h);
        for (std::size_t c = 0; c < ds.columns.size(); ++c)
            if (header[h] == ds.columns[c].name) col_pos[c] = static_cast<int>(h);
    }
    for (std::size_t c = 0; c < ds.columns.size(); ++c)
        if (col_pos[c] < 0)
            throw InvalidInputError("CSV is missing column '" + ds.columns[c].name + "'");
    if (target_pos < 0)
        throw InvalidInputError("CSV is missing target column '" + ds.target_name + "'");

    for (std::size_t r = 1; r < cells.size(); ++r) {
        const auto& line = cells[r];
        if (line.size() != header.size())
            throw InvalidInputError("CSV row " + std::to_string(r) + " has wrong field count");
        std::vector<double> row(ds.columns.size());
        for (std::size_t c = 0; c < ds.columns.size(); ++c) {
            const std::string& cell = line[static_cast<std::size_t>(col_pos[c])];
            if (ds.columns[c].kind == ColumnKind::categorical)
                row[c] = ds.columns[c].category_index(cell);
            else
                row[c] = parse_double(cell, "column '" + ds.columns[c].name + "'");
        }
        const double t = parse_double(line[static_cast<std::size_t>(target_pos)],
                                      "target column '" + ds.target_name + "'");
        ds.add_row(std::move(row), t);
    }
    ds.validate();
    return ds;
}

Dataset Dataset::load(const std::filesystem::path& csv, const std::filesystem::path& schema) {
    return from_csv_text(read_file(csv), read_file(schema));
}

void Dataset::save_csv(const std::filesystem::path& csv) const {
    std::ofstream out(csv);
    if (!out) throw InvalidInputError("cannot write file: " + csv.string());
    for (std::size_t c = 0; c < columns.size(); ++c)
        out << csv_escape(columns[c].name) << ',';
    out << csv_escape(target_name) << '\n';
    out.precision(17);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (columns[c].kind == ColumnKind::categorical)
                out << csv_escape(columns[c].categories[static_cast<std::size_t>(rows[r][c])]);
            else
                out << rows[r][c];
            out << ',';
        }
        out << targets[r] << '\n';
    }
}

std::string Dataset::schema_json() const {
    json cols = json::array();
    for (const auto& c : columns) {
        json col{{"name", c.name}, {"kind", to_string(c.kind)}};
        if (c.kind == ColumnKind::categorical) col["categories"] = c.categories;
        cols.push_back(std::move(col));
    }
    return json{{"columns", cols}, {"target", target_name}}.dump(2);
}

} // namespace robusta
