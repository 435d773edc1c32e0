#pragma once

#include "seqtrans/dag.hpp"
#include "seqtrans/linalg.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Closed-form Gaussian transports. Besides being usable on their own, these
// are the reference values the empirical estimators are tested against.
namespace seqtrans::gaussian {

struct GaussianSpec {
    std::vector<double> mean;
    Matrix covariance;

    std::size_t dim() const noexcept { return mean.size(); }
};

// Validates symmetry (1e-12 relative) and positive definiteness.
GaussianSpec make_spec(std::vector<double> mean, Matrix covariance);
void validate(const GaussianSpec& spec);

struct Gaussian2dParams {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double sd_x = 1.0;
    double sd_y = 1.0;
    double correlation = 0.0;
};

void validate(const Gaussian2dParams& p);
Gaussian2dParams params_from_spec(const GaussianSpec& spec);
GaussianSpec spec_from_params(const Gaussian2dParams& p);

using Point2 = std::array<double, 2>;

// x -> Ax + offset
struct AffineMap {
    Matrix linear;
    std::vector<double> offset;

    std::vector<double> operator()(std::span<const double> x) const;
};

double univariate_gaussian_ot(double mean0, double sd0, double mean1, double sd1, double x);

// Symmetric PSD square root via Jacobi eigendecomposition. Eigenvalues within
// tolerance of zero are floored at 1e-12 before the square root.
Matrix sqrt_psd(const Matrix& m);

// Optimal (Brenier) map between two Gaussians:
// A = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}, x -> mu1 + A (x - mu0).
AffineMap gaussian_ot_map(const GaussianSpec& source, const GaussianSpec& target);

Matrix cholesky_lower(const Matrix& sigma);

// Lower-triangular (Knothe) map between Gaussians in coordinate order:
// x -> mu1 + L1 L0^{-1} (x - mu0).
AffineMap knothe_map(const GaussianSpec& source, const GaussianSpec& target);

// Transport of x along the x axis, then of y conditionally on x.
Point2 conditional_gaussian_transport_2d(const Gaussian2dParams& source, const Gaussian2dParams& target,
                                         Point2 point);

// Same construction along direction u = (cos t, sin t) then u-perp.
Point2 rotated_transport_2d(const Gaussian2dParams& source, const Gaussian2dParams& target, double theta,
                            Point2 point);

// Rotates a bivariate Gaussian by angle theta (counterclockwise).
Gaussian2dParams rotate(const Gaussian2dParams& p, double theta);

// Population version of sequential conditional transport: each coordinate in
// `order` is mapped between the two conditional Gaussians given its parents
// (original parent values in the source, transported ones in the target).
// `parents[j]` lists coordinate indices.
std::vector<double> sequential_gaussian_transport(const GaussianSpec& source, const GaussianSpec& target,
                                                  std::span<const std::size_t> order,
                                                  const std::vector<std::vector<std::size_t>>& parents,
                                                  std::span<const double> x);

// DAG form: coordinates are the DAG's transported variables in ascending node
// index, parents are the conditioning parents.
std::vector<double> sequential_gaussian_transport(const GaussianSpec& source, const GaussianSpec& target,
                                                  const CausalDag& dag, std::span<const double> x);

struct ConditionalMoments {
    double mean = 0.0;
    double variance = 0.0;
};

ConditionalMoments conditional_moments(const GaussianSpec& spec, std::size_t coord,
                                       std::span<const std::size_t> given, std::span<const double> values);

struct MarkovCheck {
    bool markov = true;
    // Coordinate pairs (i < j) without an edge whose precision entry exceeds tol.
    std::vector<std::pair<std::size_t, std::size_t>> violations;
    Matrix precision;
};

MarkovCheck markov_precision_check(const GaussianSpec& spec, const Adjacency& adjacency, double tol);

// Coordinates map to the DAG's non-outcome nodes in ascending index order.
MarkovCheck markov_precision_check(const GaussianSpec& spec, const CausalDag& dag, double tol);

// n x d matrix of draws mu + L z, z from CounterRng(seed, stream).
Matrix sample_gaussian(const GaussianSpec& spec, std::size_t n, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace seqtrans::gaussian
