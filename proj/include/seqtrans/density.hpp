#pragma once

#include "seqtrans/linalg.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace seqtrans {

// Strictly increasing, finite evaluation abscissae (m >= 2).
class Grid {
public:
    Grid() = default;
    explicit Grid(std::vector<double> points);  // validates
    static Grid linspace(double lo, double hi, std::size_t m);

    std::size_t size() const noexcept { return points_.size(); }
    double front() const { return points_.front(); }
    double back() const { return points_.back(); }
    double operator[](std::size_t i) const { return points_[i]; }
    const std::vector<double>& points() const noexcept { return points_; }

    // Index of the nearest grid point; out-of-range values clamp to the ends.
    std::size_t nearest(double x) const;
    double mean_spacing() const { return (back() - front()) / static_cast<double>(size() - 1); }

private:
    std::vector<double> points_;
};

// CDF sampled on a grid: nondecreasing, last value 1.
struct EstimatedCdf {
    Grid grid;
    std::vector<double> values;

    // Piecewise-linear evaluation; 0 left of the grid, 1 right of it.
    double operator()(double x) const;
};

// Quantile function sampled on a probability grid in (0,1).
struct EstimatedQuantile {
    Grid levels;
    std::vector<double> values;

    // Piecewise-linear evaluation, clamped to the end values.
    double operator()(double p) const;
};

double effective_sample_size(std::span<const double> weights);

// h = 1.06 * sigma_w * n_eff^(-1/5).
double silverman_bandwidth(std::span<const double> samples, std::span<const double> weights);

// Product Gaussian kernel weights of each row of `points` around `center`.
// A matrix with zero columns yields all-ones weights.
std::vector<double> gaussian_kernel_weights(const Matrix& points, std::span<const double> center,
                                            std::span<const double> bandwidths);

// Same, restricted to the given columns of `data`.
std::vector<double> gaussian_kernel_weights(const Matrix& data, std::span<const std::size_t> columns,
                                            std::span<const double> center, std::span<const double> bandwidths);

// Weighted Gaussian KDE evaluated on the grid.
std::vector<double> weighted_kde(std::span<const double> samples, std::span<const double> weights, double h,
                                 const Grid& grid);

// Trapezoidal cumulative integral renormalized to end at 1.
EstimatedCdf cdf_from_density(const Grid& grid, std::span<const double> density);

// Generalized inverse inf{x : F(x) >= p} with linear interpolation inside the
// bracketing grid cell. Requires 0 < p < 1.
double quantile_from_cdf(const EstimatedCdf& cdf, double p);

// As above but accepts the closed interval and clamps to the grid ends.
double quantile_clamped(const EstimatedCdf& cdf, double p);

EstimatedQuantile quantile_on_levels(const EstimatedCdf& cdf, const Grid& levels);

// T(x) = Q1(F0(x)).
double univariate_transport(const EstimatedCdf& source, const EstimatedQuantile& target, double x);
double univariate_transport(const EstimatedCdf& source, const EstimatedCdf& target, double x);

// A weighted univariate density with its CDF, on the default grid layout:
// m equally spaced points over [min - 3h, max + 3h] of the weighted sample.
struct DensityFit {
    EstimatedCdf cdf;
    std::vector<double> density;
    double bandwidth = 0.0;
    double effective_size = 0.0;

    const Grid& grid() const noexcept { return cdf.grid; }
};

inline constexpr std::size_t kDefaultGridPoints = 512;

// Samples whose weight is below this fraction of the largest weight do not
// widen the evaluation grid (they still enter the estimate).
inline constexpr double kGridSupportCutoff = 1e-10;

// h <= 0 selects the weighted Silverman bandwidth times `bandwidth_scale`.
DensityFit fit_density(std::span<const double> samples, std::span<const double> weights, double h,
                       std::size_t grid_points = kDefaultGridPoints, double bandwidth_scale = 1.0);

}  // namespace seqtrans
