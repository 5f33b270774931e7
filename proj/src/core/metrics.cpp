#include "sparsemeta/metrics.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sparsemeta/errors.hpp"

namespace sparsemeta {

std::string format_double(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

namespace {

void check_column_name(const std::string& name) {
    if (name.empty()) throw StructuralError("metrics: empty column name");
    for (char c : name)
        if (c == ',' || c == '\n' || c == '\r')
            throw StructuralError("metrics: column name '" + name + "' contains a separator");
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

void write_metrics(const MetricsSeries& series, const std::string& path) {
    check_column_name(series.step_column);
    for (const std::string& name : series.value_columns) check_column_name(name);
    for (const MetricsRecord& record : series.records) {
        if (record.values.size() != series.value_columns.size())
            throw StructuralError("metrics: record width does not match column count");
        for (double v : record.values)
            if (!std::isfinite(v)) throw NumericalError("metrics: refusing to write a non-finite value");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("metrics: cannot open '" + path + "' for writing");
    out << series.step_column;
    for (const std::string& name : series.value_columns) out << ',' << name;
    out << '\n';
    for (const MetricsRecord& record : series.records) {
        out << record.step;
        for (double v : record.values) out << ',' << format_double(v);
        out << '\n';
    }
    out.flush();
    if (!out) throw IoError("metrics: failed writing '" + path + "'");
}

MetricsSeries read_metrics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("metrics: cannot open '" + path + "' for reading");

    MetricsSeries series;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("metrics: line 1: missing header");
    ++line_no;
    std::vector<std::string> header = split_csv_line(line);
    if (header.empty()) throw ParseError("metrics: line 1: empty header");
    series.step_column = header.front();
    series.value_columns.assign(header.begin() + 1, header.end());

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError("metrics: line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        MetricsRecord record;
        errno = 0;
        char* end = nullptr;
        record.step = std::strtoull(fields[0].c_str(), &end, 10);
        if (end == fields[0].c_str() || *end != '\0' || errno != 0)
            throw ParseError("metrics: line " + std::to_string(line_no) + ": bad step index '" +
                             fields[0] + "'");
        record.values.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            errno = 0;
            end = nullptr;
            const double v = std::strtod(fields[i].c_str(), &end);
            if (end == fields[i].c_str() || *end != '\0')
                throw ParseError("metrics: line " + std::to_string(line_no) + ": bad value '" +
                                 fields[i] + "'");
            if (!std::isfinite(v))
                throw ParseError("metrics: line " + std::to_string(line_no) + ": non-finite value");
            record.values.push_back(v);
        }
        series.records.push_back(std::move(record));
    }
    return series;
}

}  // namespace sparsemeta
