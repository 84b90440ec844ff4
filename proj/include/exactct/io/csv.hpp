#ifndef EXACTCT_IO_CSV_HPP
#define EXACTCT_IO_CSV_HPP

// Plain comma-separated tables: no quoting, first row is the header.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../biomarkers.hpp"
#include "../error.hpp"
#include "../ml/dataset.hpp"

namespace exactct {

/// Shortest form is not needed; 17 significant digits always round-trips a double.
inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& field)
{
    if (s.empty())
        throw ParseError(field, "empty numeric field '" + field + "'");
    if (std::isspace(static_cast<unsigned char>(s.front())))
        throw ParseError(field, "bad numeric value '" + s + "' in field '" + field + "'");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    // Subnormals set ERANGE but are exact; only overflow is rejected.
    if (end != s.c_str() + s.size() || !std::isfinite(v))
        throw ParseError(field, "bad numeric value '" + s + "' in field '" + field + "'");
    return v;
}

struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        throw ParseError(name, "missing column '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

inline CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = split_csv_line(line);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError("row", path + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                                        std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (first)
        throw ParseError("header", path + ": empty file");
    return t;
}

inline void write_csv(const std::string& path, const CsvTable& t)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path);
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows)
        line(r);
    if (!out)
        throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Feature CSV: case_id followed by the fixed feature columns

inline std::vector<std::string> feature_header()
{
    std::vector<std::string> h{"case_id"};
    for (const char* n : FeatureVector::names)
        h.emplace_back(n);
    return h;
}

inline CsvTable features_to_table(const std::vector<FeatureVector>& rows)
{
    CsvTable t;
    t.header = feature_header();
    for (const auto& f : rows) {
        std::vector<std::string> r{f.case_id};
        for (double v : f.values)
            r.push_back(format_double(v));
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline void write_features_csv(const std::string& path, const std::vector<FeatureVector>& rows)
{
    write_csv(path, features_to_table(rows));
}

inline std::vector<FeatureVector> features_from_table(const CsvTable& t)
{
    if (t.header != feature_header())
        throw ParseError("header", "feature CSV header does not match the canonical column order");
    std::vector<FeatureVector> out;
    for (const auto& r : t.rows) {
        FeatureVector f;
        f.case_id = r[0];
        for (std::size_t i = 0; i < FeatureVector::size; ++i)
            f.values[i] = parse_double(r[i + 1], FeatureVector::names[i]);
        out.push_back(std::move(f));
    }
    return out;
}

inline std::vector<FeatureVector> read_features_csv(const std::string& path)
{
    return features_from_table(read_csv(path));
}

/// case_id -> value from a two-column CSV (labels or PTB logits).
inline std::map<std::string, double> read_keyed_csv(const std::string& path, const std::string& value_column)
{
    const CsvTable t = read_csv(path);
    const std::size_t id = t.column("case_id"), val = t.column(value_column);
    std::map<std::string, double> out;
    for (const auto& r : t.rows)
        if (!out.emplace(r[id], parse_double(r[val], value_column)).second)
            throw ParseError("case_id", path + ": duplicate case_id " + r[id]);
    return out;
}

inline std::map<std::string, int> read_labels_csv(const std::string& path)
{
    std::map<std::string, int> out;
    for (const auto& [id, v] : read_keyed_csv(path, "label")) {
        if (v != 0.0 && v != 1.0)
            throw ParseError("label", path + ": label must be 0 or 1 for " + id);
        out[id] = static_cast<int>(v);
    }
    return out;
}

inline void write_labels_csv(const std::string& path, const std::vector<std::pair<std::string, int>>& labels)
{
    CsvTable t;
    t.header = {"case_id", "label"};
    for (const auto& [id, y] : labels)
        t.rows.push_back({id, std::to_string(y)});
    write_csv(path, t);
}

/// Joins feature rows with their labels; every row needs a label.
inline Dataset make_dataset(const std::vector<FeatureVector>& rows, const std::map<std::string, int>& labels,
                            const std::string& source = "")
{
    Dataset d;
    d.source = source;
    d.features.assign(FeatureVector::names.begin(), FeatureVector::names.end());
    for (const auto& f : rows) {
        const auto it = labels.find(f.case_id);
        if (it == labels.end())
            throw ArgumentError("no label for case " + f.case_id);
        d.ids.push_back(f.case_id);
        d.x.emplace_back(f.values.begin(), f.values.end());
        d.y.push_back(it->second);
    }
    d.validate();
    return d;
}

} // namespace exactct

#endif // EXACTCT_IO_CSV_HPP
