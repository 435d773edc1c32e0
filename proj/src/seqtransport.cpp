#include "seqtrans/seqtransport.hpp"

#include "seqtrans/error.hpp"
#include "seqtrans/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace seqtrans {

namespace {

constexpr double kMinEffectiveSize = 5.0;
constexpr double kWidenFactor = 1.5;
constexpr std::size_t kMaxWidenings = 5;

std::vector<double> column_of(const Matrix& m, std::size_t c) {
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
    return out;
}

void apply_jitter(std::array<Matrix, 2>& groups, std::uint64_t seed, std::vector<std::string>& warnings,
                  const std::vector<std::string>& names) {
    const std::size_t d = groups[0].cols();
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<double> all;
        for (const auto& g : groups)
            for (std::size_t r = 0; r < g.rows(); ++r) all.push_back(g(r, c));
        std::sort(all.begin(), all.end());
        double gap = std::numeric_limits<double>::infinity();
        bool ties = false;
        for (std::size_t i = 1; i < all.size(); ++i) {
            const double diff = all[i] - all[i - 1];
            if (diff == 0.0) ties = true;
            else gap = std::min(gap, diff);
        }
        if (!ties || !std::isfinite(gap)) continue;
        CounterRng rng(seed, c);
        for (auto& g : groups)
            for (std::size_t r = 0; r < g.rows(); ++r) g(r, c) += (rng.uniform() - 0.5) * gap;
        warnings.push_back("jittered column '" + names[c] + "' by +/-" + format_number(gap / 2));
    }
}

}  // namespace

std::size_t TransportContext::coordinate(std::string_view name) const {
    const auto it = std::find(variable_names.begin(), variable_names.end(), name);
    if (it == variable_names.end()) throw ValidationError("'" + std::string(name) + "' is not a transported variable");
    return static_cast<std::size_t>(it - variable_names.begin());
}

TransportContext fit_context(const Dataset& dataset, const CausalDag& dag, const TransportOptions& options) {
    validate(dag);
    if (!(options.bandwidth_scale > 0.0)) throw ValidationError("bandwidth scale must be positive");
    if (options.grid_points < 3) throw ValidationError("density grid needs at least 3 points");
    if (options.source_group == options.target_group) throw ValidationError("source and target groups coincide");

    std::set<int> levels(dataset.sensitive().begin(), dataset.sensitive().end());
    for (int v : levels) {
        if (v != 0 && v != 1) {
            throw ValidationError("sensitive column '" + dataset.sensitive_name() + "' is not binary (found value " +
                                  std::to_string(v) + ")");
        }
    }

    TransportContext ctx;
    ctx.dag = dag;
    ctx.order = topological_order(dag);
    ctx.variables = dag.variables();
    ctx.options = options;
    ctx.dataset_hash = dataset.hash();
    const std::size_t d = ctx.variables.size();
    if (d == 0) throw ValidationError("dag has no variables to transport");

    std::vector<std::size_t> cols;
    for (std::size_t node : ctx.variables) {
        ctx.variable_names.push_back(dag.node_names[node]);
        cols.push_back(dataset.column_index(dag.node_names[node]));
    }
    auto coord_of = [&ctx](std::size_t node) {
        return static_cast<std::size_t>(std::find(ctx.variables.begin(), ctx.variables.end(), node) -
                                        ctx.variables.begin());
    };
    for (std::size_t node : ctx.order.order) ctx.order_coords.push_back(coord_of(node));
    ctx.parent_coords.resize(d);
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t p : conditioning_parents(dag, ctx.variables[c])) ctx.parent_coords[c].push_back(coord_of(p));

    ctx.groups[kSourceSide] = dataset.select(options.source_group, cols);
    ctx.groups[kTargetSide] = dataset.select(options.target_group, cols);
    if (ctx.groups[kSourceSide].rows() == 0) throw ValidationError("source group is empty");
    if (ctx.groups[kTargetSide].rows() == 0) throw ValidationError("target group is empty");
    if (options.jitter) apply_jitter(ctx.groups, options.seed, ctx.warnings, ctx.variable_names);

    ctx.kde_bandwidth.resize(d);
    ctx.parent_bandwidth.resize(d);
    ctx.root_fits.resize(d);
    for (int side : {kSourceSide, kTargetSide}) {
        const Matrix& g = ctx.groups[static_cast<std::size_t>(side)];
        std::vector<double> silverman(d);
        for (std::size_t c = 0; c < d; ++c) {
            const auto x = column_of(g, c);
            const std::vector<double> ones(x.size(), 1.0);
            try {
                silverman[c] = silverman_bandwidth(x, ones);
            } catch (const Error& e) {
                throw NumericError("variable '" + ctx.variable_names[c] + "' in " +
                                   (side == kSourceSide ? "source" : "target") + " group: " + e.what());
            }
            ctx.kde_bandwidth[c][static_cast<std::size_t>(side)] = options.bandwidth_scale * silverman[c];
        }
        for (std::size_t c = 0; c < d; ++c) {
            auto& b = ctx.parent_bandwidth[c][static_cast<std::size_t>(side)];
            for (std::size_t p : ctx.parent_coords[c]) b.push_back(options.bandwidth_scale * silverman[p]);
            if (ctx.parent_coords[c].empty()) {
                const auto x = column_of(g, c);
                const std::vector<double> ones(x.size(), 1.0);
                ctx.root_fits[c][static_cast<std::size_t>(side)] =
                    fit_density(x, ones, ctx.kde_bandwidth[c][static_cast<std::size_t>(side)], options.grid_points);
            }
        }
    }
    return ctx;
}

ConditionalFit fit_conditional(const TransportContext& ctx, int side, std::size_t coord,
                               std::span<const double> parent_center) {
    if (side != kSourceSide && side != kTargetSide) throw ValidationError("side must be 0 (source) or 1 (target)");
    if (coord >= ctx.dim()) throw ValidationError("coordinate out of range");
    const auto s = static_cast<std::size_t>(side);
    const auto& pc = ctx.parent_coords[coord];
    if (parent_center.size() != pc.size()) throw ValidationError("parent vector has the wrong length");
    for (double v : parent_center)
        if (std::isnan(v)) throw ValidationError("NaN parent value");

    if (pc.empty() && ctx.root_fits[coord][s]) {
        return ConditionalFit{*ctx.root_fits[coord][s], {}, 0};
    }

    const Matrix& g = ctx.groups[s];
    ConditionalFit out;
    out.parent_bandwidth = ctx.parent_bandwidth[coord][s];
    std::vector<double> w = gaussian_kernel_weights(g, pc, parent_center, out.parent_bandwidth);
    while (!pc.empty() && effective_sample_size(w) < kMinEffectiveSize && out.widenings < kMaxWidenings) {
        for (double& b : out.parent_bandwidth) b *= kWidenFactor;
        w = gaussian_kernel_weights(g, pc, parent_center, out.parent_bandwidth);
        ++out.widenings;
    }
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) {
        throw NumericError("all kernel weights vanished for variable '" + ctx.variable_names[coord] +
                           "'; the parent values lie far outside the data");
    }

    const auto x = column_of(g, coord);
    double h = 0.0;
    try {
        h = ctx.options.bandwidth_scale * silverman_bandwidth(x, w);
    } catch (const NumericError&) {
        // Weight concentrated on tied values: fall back to the unconditional bandwidth.
        h = ctx.kde_bandwidth[coord][s];
    }
    out.fit = fit_density(x, w, h, ctx.options.grid_points);
    return out;
}

CounterfactualResult transport_individual(const TransportContext& ctx, std::span<const double> a) {
    const std::size_t d = ctx.dim();
    if (a.size() != d) {
        throw ValidationError("individual has " + std::to_string(a.size()) + " values, expected " + std::to_string(d));
    }
    for (std::size_t c = 0; c < d; ++c)
        if (!std::isfinite(a[c])) throw ValidationError("non-finite value for '" + ctx.variable_names[c] + "'");

    CounterfactualResult out;
    out.original.assign(a.begin(), a.end());
    out.transported.assign(a.begin(), a.end());
    std::vector<bool> done(d, false);
    for (std::size_t j : ctx.order_coords) {
        StepRecord step;
        step.coord = j;
        for (std::size_t p : ctx.parent_coords[j]) {
            if (!done[p]) throw ValidationError("internal: parent transported after its child");
            step.source_parents.push_back(a[p]);
            step.target_parents.push_back(out.transported[p]);
        }
        const auto src = fit_conditional(ctx, kSourceSide, j, step.source_parents);
        const auto tgt = fit_conditional(ctx, kTargetSide, j, step.target_parents);
        step.value = a[j];
        step.probability = src.fit.cdf(a[j]);
        step.mapped = quantile_clamped(tgt.fit.cdf, step.probability);
        step.widenings = src.widenings + tgt.widenings;
        if (step.widenings > 0) {
            out.warnings.push_back("widened parent bandwidths for '" + ctx.variable_names[j] + "' " +
                                   std::to_string(step.widenings) + " time(s) (sparse conditioning region)");
        }
        out.transported[j] = step.mapped;
        done[j] = true;
        out.steps.push_back(std::move(step));
    }
    return out;
}

std::vector<CounterfactualResult> transport_all(const TransportContext& ctx, const Matrix& rows) {
    std::vector<CounterfactualResult> out;
    out.reserve(rows.rows());
    for (std::size_t r = 0; r < rows.rows(); ++r) out.push_back(transport_individual(ctx, rows.row(r)));
    return out;
}

}  // namespace seqtrans
