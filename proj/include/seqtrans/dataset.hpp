#pragma once

#include "seqtrans/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace seqtrans {

// Named numeric columns plus a binary sensitive attribute (0 = source level,
// 1 = target level after ingestion).
class Dataset {
public:
    Dataset() = default;
    // Validates shape and finiteness. Sensitive values are not restricted here
    // so that consumers can report non-binary data themselves.
    Dataset(std::vector<std::string> columns, Matrix values, std::vector<int> sensitive,
            std::string sensitive_name = "s");

    std::size_t rows() const noexcept { return values_.rows(); }
    const std::vector<std::string>& columns() const noexcept { return columns_; }
    const Matrix& values() const noexcept { return values_; }
    const std::vector<int>& sensitive() const noexcept { return sensitive_; }
    const std::string& sensitive_name() const noexcept { return sensitive_name_; }

    std::optional<std::size_t> find_column(std::string_view name) const;
    std::size_t column_index(std::string_view name) const;  // throws ValidationError
    std::vector<double> column(std::string_view name) const;
    std::size_t count(int level) const;

    // Rows whose sensitive value equals `level`, restricted to `columns`.
    Matrix select(int level, std::span<const std::size_t> columns) const;

    Dataset with_column(std::string name, std::span<const double> values) const;

    std::uint64_t hash() const;

private:
    std::vector<std::string> columns_;
    Matrix values_;
    std::vector<int> sensitive_;
    std::string sensitive_name_;
};

struct IngestOptions {
    std::string sensitive = "s";
    std::string source_level = "0";
    std::string target_level = "1";
    // When non-empty only these columns are parsed; others may hold text.
    std::vector<std::string> columns;
};

struct IngestReport {
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;  // sensitive label matched neither level
};

Dataset parse_csv(std::string_view text, const IngestOptions& options, IngestReport* report = nullptr);
Dataset ingest_csv(const std::string& path, const IngestOptions& options, IngestReport* report = nullptr);

// Shortest round-trip decimal representation; the pinned numeric format of
// every CSV/JSON number written by this project.
std::string format_number(double v);

void write_csv_row(std::ostream& out, std::span<const std::string> fields);

}  // namespace seqtrans
