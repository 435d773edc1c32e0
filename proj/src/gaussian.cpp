#include "seqtrans/gaussian.hpp"

#include "seqtrans/error.hpp"
#include "seqtrans/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace seqtrans::gaussian {

namespace {

constexpr double kEigenFloor = 1e-12;

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double max_abs(const Matrix& m) {
    double out = 0.0;
    for (double v : m.data()) out = std::max(out, std::abs(v));
    return out;
}

void require_sd(double sd, const char* what) {
    if (!(sd > 0.0) || !std::isfinite(sd)) {
        throw ValidationError(std::string(what) + " must be a positive standard deviation");
    }
}

Matrix rotation(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return Matrix{{c, -s}, {s, c}};
}

Matrix submatrix(const Matrix& m, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
    Matrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
    return out;
}

}  // namespace

void validate(const GaussianSpec& spec) {
    const std::size_t d = spec.mean.size();
    if (d == 0) throw ValidationError("gaussian spec has zero dimension");
    if (spec.covariance.rows() != d || spec.covariance.cols() != d) {
        throw ValidationError("covariance shape does not match mean length");
    }
    for (double v : spec.mean)
        if (!std::isfinite(v)) throw ValidationError("gaussian mean must be finite");
    if (max_abs_asymmetry(spec.covariance) > 1e-12 * std::max(1.0, max_abs(spec.covariance))) {
        throw ValidationError("covariance is not symmetric");
    }
    const auto eig = symmetric_eigen(spec.covariance);
    if (!(eig.values.front() > 0.0)) throw ValidationError("covariance is not positive definite");
}

GaussianSpec make_spec(std::vector<double> mean, Matrix covariance) {
    GaussianSpec spec{std::move(mean), std::move(covariance)};
    validate(spec);
    return spec;
}

void validate(const Gaussian2dParams& p) {
    require_sd(p.sd_x, "sd_x");
    require_sd(p.sd_y, "sd_y");
    if (!(std::abs(p.correlation) < 1.0)) throw ValidationError("correlation must lie in (-1, 1)");
    if (!std::isfinite(p.mean_x) || !std::isfinite(p.mean_y)) throw ValidationError("means must be finite");
}

Gaussian2dParams params_from_spec(const GaussianSpec& spec) {
    if (spec.dim() != 2) throw ValidationError("expected a bivariate gaussian spec");
    const double sx = std::sqrt(spec.covariance(0, 0));
    const double sy = std::sqrt(spec.covariance(1, 1));
    Gaussian2dParams p{spec.mean[0], spec.mean[1], sx, sy, spec.covariance(0, 1) / (sx * sy)};
    validate(p);
    return p;
}

GaussianSpec spec_from_params(const Gaussian2dParams& p) {
    validate(p);
    const double cxy = p.correlation * p.sd_x * p.sd_y;
    return GaussianSpec{{p.mean_x, p.mean_y}, Matrix{{p.sd_x * p.sd_x, cxy}, {cxy, p.sd_y * p.sd_y}}};
}

std::vector<double> AffineMap::operator()(std::span<const double> x) const {
    auto y = multiply(linear, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += offset[i];
    return y;
}

double univariate_gaussian_ot(double mean0, double sd0, double mean1, double sd1, double x) {
    require_sd(sd0, "sd0");
    require_sd(sd1, "sd1");
    return mean1 + (sd1 / sd0) * (x - mean0);
}

Matrix sqrt_psd(const Matrix& m) {
    if (!m.square()) throw ValidationError("sqrt_psd: matrix is not square");
    if (max_abs_asymmetry(m) > 1e-10 * std::max(1.0, max_abs(m))) {
        throw ValidationError("sqrt_psd: matrix is not symmetric");
    }
    const auto eig = symmetric_eigen(m);
    const double tol = 1e-10 * std::max(1.0, std::abs(eig.values.back()));
    if (eig.values.front() < -tol) {
        throw NumericError("sqrt_psd: negative eigenvalue " + std::to_string(eig.values.front()));
    }
    return symmetrize(spectral_apply(eig, [](double l) { return std::sqrt(std::max(l, kEigenFloor)); }));
}

AffineMap gaussian_ot_map(const GaussianSpec& source, const GaussianSpec& target) {
    validate(source);
    validate(target);
    if (source.dim() != target.dim()) throw ValidationError("gaussian_ot_map: dimension mismatch");

    const auto eig0 = symmetric_eigen(source.covariance);
    const Matrix root0 = spectral_apply(eig0, [](double l) { return std::sqrt(std::max(l, kEigenFloor)); });
    const Matrix inv_root0 = spectral_apply(eig0, [](double l) { return 1.0 / std::sqrt(std::max(l, kEigenFloor)); });
    const Matrix middle = sqrt_psd(symmetrize(root0 * target.covariance * root0));
    Matrix a = symmetrize(inv_root0 * middle * inv_root0);

    auto shift = multiply(a, source.mean);
    std::vector<double> offset(target.dim());
    for (std::size_t i = 0; i < offset.size(); ++i) offset[i] = target.mean[i] - shift[i];
    return AffineMap{std::move(a), std::move(offset)};
}

Matrix cholesky_lower(const Matrix& sigma) {
    if (!sigma.square()) throw ValidationError("cholesky_lower: matrix is not square");
    if (max_abs_asymmetry(sigma) > 1e-12 * std::max(1.0, max_abs(sigma))) {
        throw ValidationError("cholesky_lower: matrix is not symmetric");
    }
    return cholesky(sigma);
}

AffineMap knothe_map(const GaussianSpec& source, const GaussianSpec& target) {
    validate(source);
    validate(target);
    if (source.dim() != target.dim()) throw ValidationError("knothe_map: dimension mismatch");
    const Matrix l0 = cholesky(source.covariance);
    const Matrix l1 = cholesky(target.covariance);
    // L0^{-1} is lower triangular; solve column by column.
    const std::size_t d = source.dim();
    Matrix l0_inv(d, d);
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<double> e(d, 0.0);
        e[c] = 1.0;
        const auto col = forward_substitute(l0, e);
        for (std::size_t r = 0; r < d; ++r) l0_inv(r, c) = col[r];
    }
    Matrix a = l1 * l0_inv;
    auto shift = multiply(a, source.mean);
    std::vector<double> offset(d);
    for (std::size_t i = 0; i < d; ++i) offset[i] = target.mean[i] - shift[i];
    return AffineMap{std::move(a), std::move(offset)};
}

Point2 conditional_gaussian_transport_2d(const Gaussian2dParams& s, const Gaussian2dParams& t, Point2 point) {
    validate(s);
    validate(t);
    const auto [x, y] = point;
    const double x_star = t.mean_x + (t.sd_x / s.sd_x) * (x - s.mean_x);
    // Conditional laws: Y | X=x ~ N(mu_y + r sd_y/sd_x (x - mu_x), sd_y^2 (1 - r^2)).
    const double source_cond_mean = s.mean_y + s.correlation * s.sd_y / s.sd_x * (x - s.mean_x);
    const double target_cond_mean = t.mean_y + t.correlation * t.sd_y / t.sd_x * (x_star - t.mean_x);
    const double slope = std::sqrt((t.sd_y * t.sd_y * (1.0 - t.correlation * t.correlation)) /
                                   (s.sd_y * s.sd_y * (1.0 - s.correlation * s.correlation)));
    return {x_star, target_cond_mean + slope * (y - source_cond_mean)};
}

Gaussian2dParams rotate(const Gaussian2dParams& p, double theta) {
    const GaussianSpec spec = spec_from_params(p);
    const Matrix r = rotation(theta);
    const auto mean = multiply(r, spec.mean);
    Matrix cov = r * spec.covariance * r.transpose();
    cov = symmetrize(cov);
    return params_from_spec(GaussianSpec{mean, cov});
}

Point2 rotated_transport_2d(const Gaussian2dParams& source, const Gaussian2dParams& target, double theta,
                            Point2 point) {
    // Work in the frame whose first axis is u: coordinates are R(-theta) x.
    const Gaussian2dParams s = rotate(source, -theta);
    const Gaussian2dParams t = rotate(target, -theta);
    const auto local = multiply(rotation(-theta), std::vector<double>{point[0], point[1]});
    const Point2 mapped = conditional_gaussian_transport_2d(s, t, {local[0], local[1]});
    const auto back = multiply(rotation(theta), std::vector<double>{mapped[0], mapped[1]});
    return {back[0], back[1]};
}

ConditionalMoments conditional_moments(const GaussianSpec& spec, std::size_t coord,
                                       std::span<const std::size_t> given, std::span<const double> values) {
    if (coord >= spec.dim()) throw ValidationError("conditional_moments: coordinate out of range");
    if (given.size() != values.size()) throw ValidationError("conditional_moments: dimension mismatch");
    ConditionalMoments out{spec.mean[coord], spec.covariance(coord, coord)};
    if (given.empty()) return out;

    const std::size_t self[] = {coord};
    const Matrix s_pp = submatrix(spec.covariance, given, given);
    const Matrix s_jp = submatrix(spec.covariance, self, given);
    std::vector<double> centered(given.size());
    for (std::size_t k = 0; k < given.size(); ++k) centered[k] = values[k] - spec.mean[given[k]];
    const auto alpha = cholesky_solve(s_pp, centered);
    std::vector<double> cross(given.size());
    for (std::size_t k = 0; k < given.size(); ++k) cross[k] = s_jp(0, k);
    const auto beta = cholesky_solve(s_pp, cross);
    for (std::size_t k = 0; k < given.size(); ++k) {
        out.mean += cross[k] * alpha[k];
        out.variance -= cross[k] * beta[k];
    }
    if (!(out.variance > 0.0)) throw NumericError("conditional variance is not positive");
    return out;
}

std::vector<double> sequential_gaussian_transport(const GaussianSpec& source, const GaussianSpec& target,
                                                  std::span<const std::size_t> order,
                                                  const std::vector<std::vector<std::size_t>>& parents,
                                                  std::span<const double> x) {
    const std::size_t d = source.dim();
    if (target.dim() != d || x.size() != d || parents.size() != d) {
        throw ValidationError("sequential_gaussian_transport: dimension mismatch");
    }
    std::vector<double> out(x.begin(), x.end());
    std::vector<bool> done(d, false);
    for (std::size_t j : order) {
        if (j >= d) throw ValidationError("sequential_gaussian_transport: order index out of range");
        const auto& p = parents[j];
        std::vector<double> original(p.size());
        std::vector<double> transported(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (!done[p[k]]) throw ValidationError("sequential_gaussian_transport: parent transported after child");
            original[k] = x[p[k]];
            transported[k] = out[p[k]];
        }
        const auto m0 = conditional_moments(source, j, p, original);
        const auto m1 = conditional_moments(target, j, p, transported);
        out[j] = m1.mean + std::sqrt(m1.variance / m0.variance) * (x[j] - m0.mean);
        done[j] = true;
    }
    return out;
}

std::vector<double> sequential_gaussian_transport(const GaussianSpec& source, const GaussianSpec& target,
                                                  const CausalDag& dag, std::span<const double> x) {
    const auto vars = dag.variables();
    if (source.dim() != vars.size()) {
        throw ValidationError("gaussian spec dimension does not match the number of transported variables");
    }
    auto coord_of = [&vars](std::size_t node) {
        return static_cast<std::size_t>(std::find(vars.begin(), vars.end(), node) - vars.begin());
    };
    std::vector<std::vector<std::size_t>> parent_coords(vars.size());
    for (std::size_t c = 0; c < vars.size(); ++c)
        for (std::size_t p : conditioning_parents(dag, vars[c])) parent_coords[c].push_back(coord_of(p));
    std::vector<std::size_t> order;
    for (std::size_t node : topological_order(dag).order) order.push_back(coord_of(node));
    return sequential_gaussian_transport(source, target, order, parent_coords, x);
}

MarkovCheck markov_precision_check(const GaussianSpec& spec, const Adjacency& adjacency, double tol) {
    validate(spec);
    if (!(tol >= 0.0)) throw ValidationError("tolerance must be nonnegative");
    const std::size_t d = spec.dim();
    if (adjacency.size() != d) throw ValidationError("spec dimension does not match graph size");
    MarkovCheck out;
    out.precision = inverse(spec.covariance);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            if (adjacency[i][j] || adjacency[j][i]) continue;
            if (std::abs(out.precision(i, j)) > tol) out.violations.emplace_back(i, j);
        }
    }
    out.markov = out.violations.empty();
    return out;
}

MarkovCheck markov_precision_check(const GaussianSpec& spec, const CausalDag& dag, double tol) {
    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < dag.size(); ++i)
        if (i != dag.outcome) nodes.push_back(i);
    if (nodes.size() != spec.dim()) {
        throw ValidationError("spec dimension " + std::to_string(spec.dim()) + " does not match " +
                              std::to_string(nodes.size()) + " non-outcome dag nodes");
    }
    Adjacency sub(nodes.size(), std::vector<bool>(nodes.size(), false));
    for (std::size_t a = 0; a < nodes.size(); ++a)
        for (std::size_t b = 0; b < nodes.size(); ++b) sub[a][b] = dag.adjacency[nodes[a]][nodes[b]];
    return markov_precision_check(spec, sub, tol);
}

Matrix sample_gaussian(const GaussianSpec& spec, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
    if (n == 0) throw ValidationError("sample size must be at least 1");
    validate(spec);
    const Matrix l = cholesky(spec.covariance);
    const std::size_t d = spec.dim();
    CounterRng rng(seed, stream);
    Matrix out(n, d);
    std::vector<double> z(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : z) v = rng.normal();
        for (std::size_t r = 0; r < d; ++r) {
            double acc = spec.mean[r];
            for (std::size_t c = 0; c <= r; ++c) acc += l(r, c) * z[c];
            out(i, r) = acc;
        }
    }
    return out;
}

}  // namespace seqtrans::gaussian
