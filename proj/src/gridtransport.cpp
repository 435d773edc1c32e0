#include "seqtrans/gridtransport.hpp"

#include "seqtrans/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace seqtrans {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'G', 'T'};

std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t out = 1;
    for (std::size_t i = 0; i < exp; ++i) out *= base;
    return out;
}

// Fractional position of x on a grid: cell index lo and weight t toward lo+1.
struct Bracket {
    std::size_t lo = 0;
    double t = 0.0;
};

Bracket bracket(const Grid& g, double x) {
    const auto& p = g.points();
    if (x <= p.front()) return {0, 0.0};
    if (x >= p.back()) return {p.size() - 2, 1.0};
    const auto hi = static_cast<std::size_t>(std::upper_bound(p.begin(), p.end(), x) - p.begin());
    return {hi - 1, (x - p[hi - 1]) / (p[hi] - p[hi - 1])};
}

// Multilinear read of a k x k^{d} table at a fractional row and parent tuple.
double interpolate_table(const std::vector<double>& table, std::size_t k, Bracket row,
                         const std::vector<Bracket>& parents) {
    const std::size_t d = parents.size();
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << (d + 1)); ++corner) {
        double w = (corner & 1) ? row.t : 1.0 - row.t;
        const std::size_t r = row.lo + (corner & 1);
        std::size_t col = 0;
        std::size_t stride = 1;
        for (std::size_t q = 0; q < d; ++q) {
            const bool up = (corner >> (q + 1)) & 1;
            w *= up ? parents[q].t : 1.0 - parents[q].t;
            col += (parents[q].lo + (up ? 1 : 0)) * stride;
            stride *= k;
        }
        if (w != 0.0) acc += w * table[r + k * col];
    }
    return acc;
}

template <class T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
bool get(std::ifstream& in, T& v) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

void put_doubles(std::ofstream& out, const std::vector<double>& v) {
    put(out, static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

bool get_doubles(std::ifstream& in, std::vector<double>& v, std::uint64_t max_len) {
    std::uint64_t n = 0;
    if (!get(in, n) || n > max_len) return false;
    v.resize(n);
    return static_cast<bool>(in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))));
}

void put_string(std::ofstream& out, const std::string& s) {
    put(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool get_string(std::ifstream& in, std::string& s) {
    std::uint32_t n = 0;
    if (!get(in, n) || n > 4096) return false;
    s.resize(n);
    return static_cast<bool>(in.read(s.data(), n));
}

}  // namespace

std::size_t VariableTensors::columns() const { return cdf[0].size() / value_grid[0].size(); }

double GridTensors::F(std::size_t coord, int side, std::size_t row, std::size_t col) const {
    return variables[coord].cdf[static_cast<std::size_t>(side)][row + k * col];
}

double GridTensors::Q(std::size_t coord, int side, std::size_t row, std::size_t col) const {
    return variables[coord].quantile[static_cast<std::size_t>(side)][row + k * col];
}

std::size_t GridTensors::element_count(std::size_t coord) const {
    const auto& v = variables[coord];
    return v.cdf[0].size() + v.cdf[1].size();
}

std::uint64_t options_hash(const TransportOptions& o) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    feed(&o.bandwidth_scale, sizeof o.bandwidth_scale);
    const std::uint64_t m = o.grid_points;
    feed(&m, sizeof m);
    feed(&o.source_group, sizeof o.source_group);
    feed(&o.target_group, sizeof o.target_group);
    const std::uint8_t j = o.jitter ? 1 : 0;
    feed(&j, 1);
    if (o.jitter) feed(&o.seed, sizeof o.seed);
    return h;
}

GridTensors build_grid_tensors(const TransportContext& ctx, std::size_t k) {
    if (k < 3) throw ValidationError("grid size k must be at least 3");
    const std::size_t d = ctx.dim();

    GridTensors out;
    out.k = k;
    std::vector<double> u(k);
    for (std::size_t i = 0; i < k; ++i) u[i] = static_cast<double>(i + 1) / static_cast<double>(k + 1);
    out.levels = Grid(u);
    out.variable_names = ctx.variable_names;
    out.order = ctx.order_coords;
    out.dataset_hash = ctx.dataset_hash;
    out.dag_hash = ctx.dag.hash();
    out.options_hash = options_hash(ctx.options);
    out.variables.resize(d);

    // Per-group value grids span each group's own [min, max].
    for (std::size_t c = 0; c < d; ++c) {
        auto& v = out.variables[c];
        v.coord = c;
        v.parents = ctx.parent_coords[c];
        if (v.parents.size() > kMaxGridParents) {
            throw ValidationError("variable '" + ctx.variable_names[c] + "' has " + std::to_string(v.parents.size()) +
                                  " conditioning parents; the grid engine supports at most " +
                                  std::to_string(kMaxGridParents) + " (use --engine individual)");
        }
        for (int side : {kSourceSide, kTargetSide}) {
            const Matrix& g = ctx.groups[static_cast<std::size_t>(side)];
            double lo = g(0, c);
            double hi = lo;
            for (std::size_t r = 1; r < g.rows(); ++r) {
                lo = std::min(lo, g(r, c));
                hi = std::max(hi, g(r, c));
            }
            if (!(hi > lo)) {
                throw NumericError("variable '" + ctx.variable_names[c] + "' is constant in one group");
            }
            v.value_grid[static_cast<std::size_t>(side)] = Grid::linspace(lo, hi, k);
        }
    }

    for (std::size_t c = 0; c < d; ++c) {
        auto& v = out.variables[c];
        const std::size_t dj = v.parents.size();
        const std::size_t cols = ipow(k, dj);
        for (int side : {kSourceSide, kTargetSide}) {
            const auto s = static_cast<std::size_t>(side);
            auto& F = v.cdf[s];
            auto& Q = v.quantile[s];
            F.assign(k * cols, 0.0);
            Q.assign(k * cols, 0.0);
            std::vector<double> center(dj);
            for (std::size_t col = 0; col < cols; ++col) {
                std::size_t rem = col;
                for (std::size_t q = 0; q < dj; ++q) {
                    center[q] = out.variables[v.parents[q]].value_grid[s][rem % k];
                    rem /= k;
                }
                const auto fit = fit_conditional(ctx, side, c, center);
                for (std::size_t r = 0; r < k; ++r) {
                    F[r + k * col] = fit.fit.cdf(v.value_grid[s][r]);
                    Q[r + k * col] = quantile_from_cdf(fit.fit.cdf, u[r]);
                }
            }
        }
    }
    return out;
}

GridTensors build_grid_tensors(const Dataset& dataset, const CausalDag& dag, std::size_t k,
                               const TransportOptions& options) {
    return build_grid_tensors(fit_context(dataset, dag, options), k);
}

std::vector<double> lookup_counterfactual(const GridTensors& t, std::span<const double> a, LookupMode mode) {
    const std::size_t d = t.variables.size();
    if (a.size() != d) throw ValidationError("individual has the wrong number of values for these tensors");
    for (double v : a)
        if (std::isnan(v)) throw ValidationError("cannot look up NaN");

    std::vector<double> b(a.begin(), a.end());
    for (std::size_t j : t.order) {
        const auto& v = t.variables[j];
        const std::size_t dj = v.parents.size();
        if (mode == LookupMode::nearest) {
            std::size_t col0 = 0;
            std::size_t col1 = 0;
            std::size_t stride = 1;
            for (std::size_t q = 0; q < dj; ++q) {
                const auto& pg = t.variables[v.parents[q]].value_grid;
                col0 += pg[0].nearest(a[v.parents[q]]) * stride;
                col1 += pg[1].nearest(b[v.parents[q]]) * stride;
                stride *= t.k;
            }
            const std::size_t k0 = v.value_grid[0].nearest(a[j]);
            const double p = v.cdf[0][k0 + t.k * col0];
            const std::size_t k1 = t.levels.nearest(p);
            b[j] = v.quantile[1][k1 + t.k * col1];
        } else {
            std::vector<Bracket> par0(dj);
            std::vector<Bracket> par1(dj);
            for (std::size_t q = 0; q < dj; ++q) {
                const auto& pg = t.variables[v.parents[q]].value_grid;
                par0[q] = bracket(pg[0], a[v.parents[q]]);
                par1[q] = bracket(pg[1], b[v.parents[q]]);
            }
            const double p = interpolate_table(v.cdf[0], t.k, bracket(v.value_grid[0], a[j]), par0);
            b[j] = interpolate_table(v.quantile[1], t.k, bracket(t.levels, p), par1);
        }
    }
    return b;
}

void save_tensors(const GridTensors& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write tensor cache '" + path + "'");
    out.write(kMagic, 4);
    put(out, kTensorFormatVersion);
    put(out, static_cast<std::uint32_t>(t.k));
    put(out, t.dataset_hash);
    put(out, t.dag_hash);
    put(out, t.options_hash);
    put(out, static_cast<std::uint32_t>(t.variables.size()));
    for (const auto& name : t.variable_names) put_string(out, name);
    for (std::size_t c : t.order) put(out, static_cast<std::uint32_t>(c));
    for (const auto& v : t.variables) {
        put(out, static_cast<std::uint32_t>(v.parents.size()));
        for (std::size_t p : v.parents) put(out, static_cast<std::uint32_t>(p));
        for (std::size_t s = 0; s < 2; ++s) {
            put_doubles(out, v.value_grid[s].points());
            put_doubles(out, v.cdf[s]);
            put_doubles(out, v.quantile[s]);
        }
    }
    if (!out) throw ValidationError("failed writing tensor cache '" + path + "'");
}

std::optional<GridTensors> load_tensors(const std::string& path, std::uint64_t dataset_hash, std::uint64_t dag_hash,
                                        std::uint64_t opts_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) return std::nullopt;
    std::uint32_t version = 0;
    std::uint32_t k = 0;
    std::uint32_t nvars = 0;
    GridTensors t;
    if (!get(in, version) || version != kTensorFormatVersion) return std::nullopt;
    if (!get(in, k) || k < 3) return std::nullopt;
    if (!get(in, t.dataset_hash) || !get(in, t.dag_hash) || !get(in, t.options_hash)) return std::nullopt;
    if (t.dataset_hash != dataset_hash || t.dag_hash != dag_hash || t.options_hash != opts_hash) return std::nullopt;
    if (!get(in, nvars) || nvars == 0 || nvars > 4096) return std::nullopt;
    t.k = k;
    std::vector<double> u(k);
    for (std::size_t i = 0; i < k; ++i) u[i] = static_cast<double>(i + 1) / static_cast<double>(k + 1);
    t.levels = Grid(u);
    t.variable_names.resize(nvars);
    for (auto& name : t.variable_names)
        if (!get_string(in, name)) return std::nullopt;
    t.order.resize(nvars);
    for (auto& c : t.order) {
        std::uint32_t v = 0;
        if (!get(in, v) || v >= nvars) return std::nullopt;
        c = v;
    }
    t.variables.resize(nvars);
    for (std::size_t c = 0; c < nvars; ++c) {
        auto& v = t.variables[c];
        v.coord = c;
        std::uint32_t np = 0;
        if (!get(in, np) || np > kMaxGridParents) return std::nullopt;
        v.parents.resize(np);
        for (auto& p : v.parents) {
            std::uint32_t x = 0;
            if (!get(in, x) || x >= nvars) return std::nullopt;
            p = x;
        }
        const std::uint64_t table = static_cast<std::uint64_t>(k) * ipow(k, np);
        for (std::size_t s = 0; s < 2; ++s) {
            std::vector<double> grid;
            if (!get_doubles(in, grid, k) || grid.size() != k) return std::nullopt;
            try {
                v.value_grid[s] = Grid(std::move(grid));
            } catch (const ValidationError&) {
                return std::nullopt;
            }
            if (!get_doubles(in, v.cdf[s], table) || v.cdf[s].size() != table) return std::nullopt;
            if (!get_doubles(in, v.quantile[s], table) || v.quantile[s].size() != table) return std::nullopt;
        }
    }
    return t;
}

}  // namespace seqtrans
