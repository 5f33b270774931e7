#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sparsemeta {

// One telemetry row: a step index plus one value per named column.
struct MetricsRecord {
    std::uint64_t step = 0;
    std::vector<double> values;

    bool operator==(const MetricsRecord&) const = default;
};

struct MetricsSeries {
    std::string step_column = "step";
    std::vector<std::string> value_columns;
    std::vector<MetricsRecord> records;

    bool operator==(const MetricsSeries&) const = default;
};

// CSV with a header row; values are written with 17 significant digits so
// read_metrics(write_metrics(s)) reproduces every double bit for bit.
// Non-finite values are refused with a NumericalError.
void write_metrics(const MetricsSeries& series, const std::string& path);

// Exact inverse of write_metrics; malformed rows raise ParseError with the
// offending line number.
MetricsSeries read_metrics(const std::string& path);

// Shared float formatting: shortest 17-significant-digit form.
std::string format_double(double value);

}  // namespace sparsemeta
