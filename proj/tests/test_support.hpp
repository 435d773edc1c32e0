#pragma once

// Independent oracles shared by the test suites. Nothing here calls into the
// estimators under test.

#include "seqtrans/dataset.hpp"
#include "seqtrans/gaussian.hpp"
#include "seqtrans/linalg.hpp"
#include "seqtrans/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace testing {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Two-sample Kolmogorov-Smirnov statistic by merging the sorted samples.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// Acyclic iff some permutation puts every edge forward (brute force, n <= 7).
inline bool acyclic_by_permutation(const std::vector<std::vector<bool>>& adj) {
    const std::size_t n = adj.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
        std::vector<std::size_t> pos(n);
        for (std::size_t k = 0; k < n; ++k) pos[perm[k]] = k;
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i)
            for (std::size_t j = 0; j < n && ok; ++j)
                if (adj[i][j] && pos[i] >= pos[j]) ok = false;
        if (ok) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

// Random SPD matrix A A^T + d I with entries of A uniform in (-1, 1).
inline seqtrans::Matrix random_spd(std::size_t d, seqtrans::CounterRng& rng) {
    seqtrans::Matrix a(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) a(i, j) = 2.0 * rng.uniform() - 1.0;
    seqtrans::Matrix m = a * a.transpose();
    for (std::size_t i = 0; i < d; ++i) m(i, i) += 0.5;
    return m;
}

inline double max_abs_diff(const seqtrans::Matrix& a, const seqtrans::Matrix& b) {
    double out = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out = std::max(out, std::abs(a(i, j) - b(i, j)));
    return out;
}

// Two-group dataset with Gaussian rows: group 0 from spec0, group 1 from spec1.
inline seqtrans::Dataset gaussian_dataset(const seqtrans::gaussian::GaussianSpec& spec0,
                                          const seqtrans::gaussian::GaussianSpec& spec1, std::size_t n0,
                                          std::size_t n1, std::uint64_t seed,
                                          std::vector<std::string> names) {
    const auto x0 = seqtrans::gaussian::sample_gaussian(spec0, n0, seed, 0);
    const auto x1 = seqtrans::gaussian::sample_gaussian(spec1, n1, seed, 1);
    const std::size_t d = spec0.dim();
    seqtrans::Matrix values(n0 + n1, d);
    std::vector<int> s(n0 + n1);
    for (std::size_t r = 0; r < n0; ++r) {
        for (std::size_t c = 0; c < d; ++c) values(r, c) = x0(r, c);
        s[r] = 0;
    }
    for (std::size_t r = 0; r < n1; ++r) {
        for (std::size_t c = 0; c < d; ++c) values(n0 + r, c) = x1(r, c);
        s[n0 + r] = 1;
    }
    return seqtrans::Dataset(std::move(names), std::move(values), std::move(s), "s");
}

}  // namespace testing
