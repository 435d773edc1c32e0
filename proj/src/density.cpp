#include "seqtrans/density.hpp"

#include "seqtrans/dataset.hpp"
#include "seqtrans/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace seqtrans {

namespace {

// Kernel contributions beyond this many bandwidths are below 1e-16 relative.
constexpr double kKernelReach = 8.6;

double total_weight(std::span<const double> weights) {
    double s = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and nonnegative");
        s += w;
    }
    return s;
}

double interpolate(double x0, double x1, double y0, double y1, double x) {
    if (x1 == x0) return y0;
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
}

}  // namespace

Grid::Grid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw ValidationError("grid needs at least 2 points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!std::isfinite(points_[i])) throw ValidationError("grid points must be finite");
        if (i > 0 && !(points_[i] > points_[i - 1])) throw ValidationError("grid points must be strictly increasing");
    }
}

Grid Grid::linspace(double lo, double hi, std::size_t m) {
    if (m < 2) throw ValidationError("grid needs at least 2 points");
    if (!(hi > lo)) throw ValidationError("grid bounds must satisfy lo < hi");
    std::vector<double> pts(m);
    const double step = (hi - lo) / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) pts[i] = lo + step * static_cast<double>(i);
    pts.back() = hi;
    return Grid(std::move(pts));
}

std::size_t Grid::nearest(double x) const {
    if (x <= points_.front()) return 0;
    if (x >= points_.back()) return points_.size() - 1;
    const auto hi = static_cast<std::size_t>(std::lower_bound(points_.begin(), points_.end(), x) - points_.begin());
    const std::size_t lo = hi - 1;
    // Ties go to the lower index.
    return (x - points_[lo] <= points_[hi] - x) ? lo : hi;
}

double EstimatedCdf::operator()(double x) const {
    const auto& g = grid.points();
    if (x <= g.front()) return x < g.front() ? 0.0 : values.front();
    if (x >= g.back()) return 1.0;
    const auto hi = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), x) - g.begin());
    return interpolate(g[hi - 1], g[hi], values[hi - 1], values[hi], x);
}

double EstimatedQuantile::operator()(double p) const {
    const auto& u = levels.points();
    if (p <= u.front()) return values.front();
    if (p >= u.back()) return values.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(u.begin(), u.end(), p) - u.begin());
    return interpolate(u[hi - 1], u[hi], values[hi - 1], values[hi], p);
}

double effective_sample_size(std::span<const double> weights) {
    double s = 0.0;
    double s2 = 0.0;
    for (double w : weights) {
        s += w;
        s2 += w * w;
    }
    return s2 > 0.0 ? s * s / s2 : 0.0;
}

double silverman_bandwidth(std::span<const double> samples, std::span<const double> weights) {
    if (samples.size() != weights.size()) throw ValidationError("samples and weights differ in length");
    if (samples.size() < 2) throw ValidationError("silverman_bandwidth needs at least 2 samples");
    const double total = total_weight(weights);
    if (!(total > 0.0)) throw ValidationError("silverman_bandwidth: total weight must be positive");

    double mean = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) mean += weights[i] * samples[i];
    mean /= total;
    double var = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i] - mean;
        var += weights[i] * d * d;
    }
    var /= total;
    const double sd = std::sqrt(var);
    // Relative threshold: a constant sample yields roundoff-level variance.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        throw NumericError("degenerate sample: all values equal " + format_number(mean));
    }
    return 1.06 * sd * std::pow(effective_sample_size(weights), -0.2);
}

std::vector<double> gaussian_kernel_weights(const Matrix& data, std::span<const std::size_t> columns,
                                            std::span<const double> center, std::span<const double> bandwidths) {
    if (columns.size() != center.size() || columns.size() != bandwidths.size()) {
        throw ValidationError("kernel weights: dimension mismatch");
    }
    for (double b : bandwidths)
        if (!(b > 0.0)) throw ValidationError("kernel bandwidths must be positive");
    for (std::size_t c : columns)
        if (c >= data.cols()) throw ValidationError("kernel weights: column out of range");

    std::vector<double> w(data.rows(), 1.0);
    if (columns.empty()) return w;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        double q = 0.0;
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const double z = (data(i, columns[k]) - center[k]) / bandwidths[k];
            q += z * z;
        }
        w[i] = std::exp(-0.5 * q);
    }
    return w;
}

std::vector<double> gaussian_kernel_weights(const Matrix& points, std::span<const double> center,
                                            std::span<const double> bandwidths) {
    if (points.cols() != center.size()) throw ValidationError("kernel weights: dimension mismatch");
    std::vector<std::size_t> cols(points.cols());
    for (std::size_t k = 0; k < cols.size(); ++k) cols[k] = k;
    return gaussian_kernel_weights(points, cols, center, bandwidths);
}

std::vector<double> weighted_kde(std::span<const double> samples, std::span<const double> weights, double h,
                                 const Grid& grid) {
    if (samples.size() != weights.size()) throw ValidationError("samples and weights differ in length");
    if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("kde bandwidth must be positive");
    const double total = total_weight(weights);
    if (!(total > 0.0)) throw ValidationError("kde: total weight must be positive");

    const double wmax = *std::max_element(weights.begin(), weights.end());
    const double wcut = wmax * 1e-17;
    const auto& g = grid.points();
    std::vector<double> f(g.size(), 0.0);
    const double inv_h = 1.0 / h;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double w = weights[i];
        if (w <= wcut) continue;
        const double x = samples[i];
        const auto lo = std::lower_bound(g.begin(), g.end(), x - kKernelReach * h) - g.begin();
        const auto hi = std::upper_bound(g.begin(), g.end(), x + kKernelReach * h) - g.begin();
        for (auto k = lo; k < hi; ++k) {
            const double z = (g[static_cast<std::size_t>(k)] - x) * inv_h;
            f[static_cast<std::size_t>(k)] += w * std::exp(-0.5 * z * z);
        }
    }
    const double norm = 1.0 / (total * h * std::sqrt(2.0 * std::numbers::pi));
    for (double& v : f) v *= norm;
    return f;
}

EstimatedCdf cdf_from_density(const Grid& grid, std::span<const double> density) {
    if (density.size() != grid.size()) throw ValidationError("density and grid differ in length");
    for (std::size_t i = 0; i < density.size(); ++i) {
        if (!(density[i] >= 0.0) || !std::isfinite(density[i])) {
            throw ValidationError("negative or non-finite density value at grid index " + std::to_string(i));
        }
    }
    std::vector<double> c(grid.size(), 0.0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        c[i] = c[i - 1] + 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
    }
    const double total = c.back();
    if (!(total > 0.0)) throw NumericError("density integrates to zero on the grid");
    for (double& v : c) v = std::min(1.0, v / total);
    c.back() = 1.0;
    return EstimatedCdf{grid, std::move(c)};
}

double quantile_clamped(const EstimatedCdf& cdf, double p) {
    const auto& f = cdf.values;
    const auto& g = cdf.grid.points();
    if (p <= f.front()) return g.front();
    const auto i = static_cast<std::size_t>(std::lower_bound(f.begin(), f.end(), p) - f.begin());
    if (i >= f.size()) return g.back();
    // f[i-1] < p <= f[i]
    return interpolate(f[i - 1], f[i], g[i - 1], g[i], p);
}

double quantile_from_cdf(const EstimatedCdf& cdf, double p) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile level must lie in (0,1), got " + std::to_string(p));
    return quantile_clamped(cdf, p);
}

EstimatedQuantile quantile_on_levels(const EstimatedCdf& cdf, const Grid& levels) {
    if (!(levels.front() > 0.0 && levels.back() < 1.0)) throw ValidationError("quantile levels must lie in (0,1)");
    std::vector<double> q(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) q[i] = quantile_from_cdf(cdf, levels[i]);
    return EstimatedQuantile{levels, std::move(q)};
}

double univariate_transport(const EstimatedCdf& source, const EstimatedQuantile& target, double x) {
    if (std::isnan(x)) throw ValidationError("cannot transport NaN");
    return target(source(x));
}

double univariate_transport(const EstimatedCdf& source, const EstimatedCdf& target, double x) {
    if (std::isnan(x)) throw ValidationError("cannot transport NaN");
    return quantile_clamped(target, source(x));
}

DensityFit fit_density(std::span<const double> samples, std::span<const double> weights, double h,
                       std::size_t grid_points, double bandwidth_scale) {
    if (samples.size() != weights.size()) throw ValidationError("samples and weights differ in length");
    if (samples.empty()) throw ValidationError("cannot fit a density to an empty sample");
    if (!(bandwidth_scale > 0.0)) throw ValidationError("bandwidth scale must be positive");
    const double total = total_weight(weights);
    if (!(total > 0.0)) throw ValidationError("fit_density: total weight must be positive");
    if (h <= 0.0) h = bandwidth_scale * silverman_bandwidth(samples, weights);

    const double wmax = *std::max_element(weights.begin(), weights.end());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (weights[i] < kGridSupportCutoff * wmax) continue;
        lo = std::min(lo, samples[i]);
        hi = std::max(hi, samples[i]);
    }
    const Grid grid = Grid::linspace(lo - 3.0 * h, hi + 3.0 * h, grid_points);
    std::vector<double> f = weighted_kde(samples, weights, h, grid);
    EstimatedCdf cdf = cdf_from_density(grid, f);
    return DensityFit{std::move(cdf), std::move(f), h, effective_sample_size(weights)};
}

}  // namespace seqtrans
