#pragma once

#include "seqtrans/density.hpp"
#include "seqtrans/seqtransport.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqtrans {

// Precomputed conditional CDF / quantile tables for one variable. Tables are
// k x k^{d_j}, stored column-major: entry (row, col) at row + k * col, where
// col is the mixed-radix index of the parent-grid tuple (first parent fastest).
struct VariableTensors {
    std::size_t coord = 0;
    std::vector<std::size_t> parents;       // conditioning parents (coordinates)
    std::array<Grid, 2> value_grid;         // g_{j|s}
    std::array<std::vector<double>, 2> cdf;       // F_{j|s}
    std::array<std::vector<double>, 2> quantile;  // Q_{j|s}

    std::size_t columns() const;
};

struct GridTensors {
    std::size_t k = 0;
    Grid levels;  // u = (1..k)/(k+1)
    std::vector<std::string> variable_names;
    std::vector<std::size_t> order;          // coordinates, topological
    std::vector<VariableTensors> variables;  // indexed by coordinate
    std::uint64_t dataset_hash = 0;
    std::uint64_t dag_hash = 0;
    std::uint64_t options_hash = 0;

    double F(std::size_t coord, int side, std::size_t row, std::size_t col) const;
    double Q(std::size_t coord, int side, std::size_t row, std::size_t col) const;
    std::size_t element_count(std::size_t coord) const;
};

// Tables grow as k^{d_j+1}; more conditioning parents than this is refused.
inline constexpr std::size_t kMaxGridParents = 4;

GridTensors build_grid_tensors(const TransportContext& ctx, std::size_t k);
GridTensors build_grid_tensors(const Dataset& dataset, const CausalDag& dag, std::size_t k,
                               const TransportOptions& options = {});

enum class LookupMode {
    nearest,      // nearest grid point snapping (default)
    interpolate,  // multilinear interpolation across cells
};

std::vector<double> lookup_counterfactual(const GridTensors& tensors, std::span<const double> a,
                                          LookupMode mode = LookupMode::nearest);

std::uint64_t options_hash(const TransportOptions& options);

// Binary cache: "STGT" magic, format version, k, hashes, variable layout, tables.
void save_tensors(const GridTensors& tensors, const std::string& path);
// Returns nullopt when the file is missing, malformed or was built from a
// different dataset / DAG / option set.
std::optional<GridTensors> load_tensors(const std::string& path, std::uint64_t dataset_hash, std::uint64_t dag_hash,
                                        std::uint64_t options_hash);

inline constexpr std::uint32_t kTensorFormatVersion = 1;

}  // namespace seqtrans
