#pragma once

#include "seqtrans/dag.hpp"
#include "seqtrans/dataset.hpp"
#include "seqtrans/density.hpp"
#include "seqtrans/linalg.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqtrans {

struct TransportOptions {
    double bandwidth_scale = 1.0;
    std::size_t grid_points = kDefaultGridPoints;
    int source_group = 0;
    int target_group = 1;
    // Uniform jitter of half the smallest positive gap on columns with ties.
    bool jitter = false;
    std::uint64_t seed = 0;
};

inline constexpr int kSourceSide = 0;
inline constexpr int kTargetSide = 1;

// Fitted state for sequential conditional transport. Coordinates are the DAG's
// transported variables in ascending node index; an individual is a vector in
// that layout.
struct TransportContext {
    CausalDag dag;
    TopologicalOrder order;
    std::vector<std::size_t> variables;        // dag node per coordinate
    std::vector<std::string> variable_names;   // column name per coordinate
    std::vector<std::size_t> order_coords;     // topological order as coordinates
    std::vector<std::vector<std::size_t>> parent_coords;  // conditioning parents
    std::array<Matrix, 2> groups;              // [source, target] rows x coordinates
    // Unconditional Silverman KDE bandwidth per coordinate and side.
    std::vector<std::array<double, 2>> kde_bandwidth;
    // Parent-kernel bandwidths b_j per coordinate and side, aligned with parent_coords.
    std::vector<std::array<std::vector<double>, 2>> parent_bandwidth;
    TransportOptions options;
    std::vector<std::string> warnings;
    std::uint64_t dataset_hash = 0;

    std::size_t dim() const noexcept { return variables.size(); }
    std::size_t coordinate(std::string_view name) const;
    // Cached unconditional fits of parentless coordinates.
    std::vector<std::array<std::optional<DensityFit>, 2>> root_fits;
};

TransportContext fit_context(const Dataset& dataset, const CausalDag& dag, const TransportOptions& options = {});

struct ConditionalFit {
    DensityFit fit;
    std::vector<double> parent_bandwidth;  // after any widening
    std::size_t widenings = 0;
};

// Kernel-weighted fit of coordinate j on one side, centered at parent values.
ConditionalFit fit_conditional(const TransportContext& ctx, int side, std::size_t coord,
                               std::span<const double> parent_center);

struct StepRecord {
    std::size_t coord = 0;
    std::vector<double> source_parents;  // a_{p(j)}
    std::vector<double> target_parents;  // T(a_{p(j)})
    double value = 0.0;                  // a_j
    double probability = 0.0;            // F_{j|source}(a_j | parents)
    double mapped = 0.0;                 // a*_j
    std::size_t widenings = 0;
};

struct CounterfactualResult {
    std::vector<double> original;
    std::vector<double> transported;
    std::vector<StepRecord> steps;  // topological order
    std::vector<std::string> warnings;
};

CounterfactualResult transport_individual(const TransportContext& ctx, std::span<const double> a);

// Rows are individuals in coordinate layout.
std::vector<CounterfactualResult> transport_all(const TransportContext& ctx, const Matrix& rows);

}  // namespace seqtrans
