#include "seqtrans/dataset.hpp"

#include "seqtrans/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace seqtrans {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Splits one line on commas; a field wrapped in double quotes may contain
// commas and "" escapes (headers from R/pandas exports are often quoted).
std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.emplace_back(trim(cur));
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

Dataset::Dataset(std::vector<std::string> columns, Matrix values, std::vector<int> sensitive,
                 std::string sensitive_name)
    : columns_(std::move(columns)),
      values_(std::move(values)),
      sensitive_(std::move(sensitive)),
      sensitive_name_(std::move(sensitive_name)) {
    if (values_.cols() != columns_.size()) throw ValidationError("dataset: column count mismatch");
    if (sensitive_.size() != values_.rows()) throw ValidationError("dataset: sensitive column length mismatch");
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i] == sensitive_name_) throw ValidationError("dataset: duplicate sensitive column");
        for (std::size_t j = i + 1; j < columns_.size(); ++j)
            if (columns_[i] == columns_[j]) throw ValidationError("dataset: duplicate column '" + columns_[i] + "'");
    }
    for (std::size_t r = 0; r < values_.rows(); ++r)
        for (std::size_t c = 0; c < values_.cols(); ++c)
            if (!std::isfinite(values_(r, c))) {
                throw ValidationError("dataset: non-finite value at row " + std::to_string(r + 1) + ", column '" +
                                      columns_[c] + "'");
            }
}

std::optional<std::size_t> Dataset::find_column(std::string_view name) const {
    const auto it = std::find(columns_.begin(), columns_.end(), name);
    if (it == columns_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns_.begin());
}

std::size_t Dataset::column_index(std::string_view name) const {
    if (auto i = find_column(name)) return *i;
    throw ValidationError("missing column '" + std::string(name) + "'");
}

std::vector<double> Dataset::column(std::string_view name) const {
    const std::size_t c = column_index(name);
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = values_(r, c);
    return out;
}

std::size_t Dataset::count(int level) const {
    return static_cast<std::size_t>(std::count(sensitive_.begin(), sensitive_.end(), level));
}

Matrix Dataset::select(int level, std::span<const std::size_t> columns) const {
    Matrix out(count(level), columns.size());
    std::size_t k = 0;
    for (std::size_t r = 0; r < rows(); ++r) {
        if (sensitive_[r] != level) continue;
        for (std::size_t c = 0; c < columns.size(); ++c) out(k, c) = values_(r, columns[c]);
        ++k;
    }
    return out;
}

Dataset Dataset::with_column(std::string name, std::span<const double> values) const {
    if (values.size() != rows()) throw ValidationError("with_column: length mismatch");
    auto cols = columns_;
    cols.push_back(std::move(name));
    Matrix m(rows(), cols.size());
    for (std::size_t r = 0; r < rows(); ++r) {
        for (std::size_t c = 0; c < values_.cols(); ++c) m(r, c) = values_(r, c);
        m(r, values_.cols()) = values[r];
    }
    return Dataset(std::move(cols), std::move(m), sensitive_, sensitive_name_);
}

std::uint64_t Dataset::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& c : columns_) feed(c.data(), c.size() + 1);
    feed(sensitive_name_.data(), sensitive_name_.size() + 1);
    for (double v : values_.data()) feed(&v, sizeof v);
    for (int s : sensitive_) feed(&s, sizeof s);
    return h;
}

Dataset parse_csv(std::string_view text, const IngestOptions& options, IngestReport* report) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    // Strip a UTF-8 byte-order mark.
    if (!lines.empty() && lines.front().starts_with("\xEF\xBB\xBF")) lines.front().remove_prefix(3);

    std::size_t first = 0;
    while (first < lines.size() && trim(lines[first]).empty()) ++first;
    if (first == lines.size()) throw ValidationError("csv has no header row");
    const auto header = split_fields(lines[first]);

    std::optional<std::size_t> sens_col;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == options.sensitive) sens_col = i;
    if (!sens_col) throw ValidationError("missing sensitive column '" + options.sensitive + "'");

    std::vector<std::size_t> keep;
    std::vector<std::string> names;
    if (options.columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i == *sens_col) continue;
            if (header[i].empty()) throw ValidationError("csv header has an empty column name (column " +
                                                         std::to_string(i + 1) + ")");
            keep.push_back(i);
            names.push_back(header[i]);
        }
    } else {
        for (const auto& want : options.columns) {
            const auto it = std::find(header.begin(), header.end(), want);
            if (it == header.end()) throw ValidationError("missing column '" + want + "'");
            if (static_cast<std::size_t>(it - header.begin()) == *sens_col) continue;
            keep.push_back(static_cast<std::size_t>(it - header.begin()));
            names.push_back(want);
        }
    }

    std::vector<double> flat;
    std::vector<int> sens;
    IngestReport rep;
    for (std::size_t li = first + 1; li < lines.size(); ++li) {
        if (trim(lines[li]).empty()) continue;
        const auto fields = split_fields(lines[li]);
        const std::size_t row_no = li + 1;  // 1-based file line
        if (fields.size() != header.size()) {
            throw ValidationError("csv line " + std::to_string(row_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        }
        ++rep.rows_read;
        const std::string& label = fields[*sens_col];
        int level = -1;
        if (label == options.source_level) {
            level = 0;
        } else if (label == options.target_level) {
            level = 1;
        } else {
            ++rep.rows_dropped;
            continue;
        }
        for (std::size_t c = 0; c < keep.size(); ++c) {
            const auto v = parse_double(fields[keep[c]]);
            if (!v) {
                throw ValidationError("csv line " + std::to_string(row_no) + ", column '" + names[c] +
                                      "': cannot parse '" + fields[keep[c]] + "' as a finite number");
            }
            flat.push_back(*v);
        }
        sens.push_back(level);
    }

    Matrix values(sens.size(), names.size());
    for (std::size_t r = 0; r < values.rows(); ++r)
        for (std::size_t c = 0; c < values.cols(); ++c) values(r, c) = flat[r * values.cols() + c];
    Dataset ds(std::move(names), std::move(values), std::move(sens), options.sensitive);
    if (ds.count(0) == 0) throw ValidationError("no rows with source level '" + options.source_level + "'");
    if (ds.count(1) == 0) throw ValidationError("no rows with target level '" + options.target_level + "'");
    if (report) *report = rep;
    return ds;
}

Dataset ingest_csv(const std::string& path, const IngestOptions& options, IngestReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read csv file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), options, report);
}

std::string format_number(double v) {
    if (v == 0.0) return "0";  // folds -0
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw NumericError("cannot format number");
    return std::string(buf, ptr);
}

void write_csv_row(std::ostream& out, std::span<const std::string> fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        const auto& f = fields[i];
        if (f.find_first_of(",\"\n") == std::string::npos) {
            out << f;
            continue;
        }
        out << '"';
        for (char c : f) out << (c == '"' ? "\"\"" : std::string(1, c));
        out << '"';
    }
    out << '\n';
}

}  // namespace seqtrans
