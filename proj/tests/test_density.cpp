#include <doctest.h>

#include "seqtrans/density.hpp"
#include "seqtrans/error.hpp"
#include "seqtrans/rng.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace seqtrans;

namespace {

std::vector<double> normal_draws(std::size_t n, double mean, double sd, std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<double> out(n);
    for (auto& v : out) v = mean + sd * rng.normal();
    return out;
}

}  // namespace

TEST_CASE("grid construction and nearest lookup") {
    const auto g = Grid::linspace(0.0, 1.0, 5);
    CHECK(g.size() == 5);
    CHECK(g[2] == doctest::Approx(0.5));
    CHECK(g.mean_spacing() == doctest::Approx(0.25));
    CHECK(g.nearest(0.3) == 1);
    CHECK(g.nearest(0.125) == 0);  // tie goes to the lower index
    CHECK(g.nearest(-4.0) == 0);
    CHECK(g.nearest(9.0) == 4);
    CHECK_THROWS_AS(Grid({0.0, 0.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(Grid({1.0}), ValidationError);
    CHECK_THROWS_AS(Grid({0.0, NAN}), ValidationError);
}

TEST_CASE("effective sample size") {
    const std::vector<double> flat{1, 1, 1, 1};
    const std::vector<double> spike{3, 0, 0, 0};
    const std::vector<double> half{1, 1, 0, 0};
    CHECK(effective_sample_size(flat) == doctest::Approx(4.0));
    CHECK(effective_sample_size(spike) == doctest::Approx(1.0));
    CHECK(effective_sample_size(half) == doctest::Approx(2.0));
}

TEST_CASE("silverman bandwidth") {
    // Unit weights: sd = sqrt(1.25), n_eff = 4.
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> w{1, 1, 1, 1};
    CHECK(silverman_bandwidth(x, w) == doctest::Approx(1.06 * std::sqrt(1.25) * std::pow(4.0, -0.2)).epsilon(1e-14));

    // Weighted: values {0, 2} with weights {1, 3}: mean 1.5, var 0.75, n_eff 1.6.
    const std::vector<double> x2{0, 2};
    const std::vector<double> w2{1, 3};
    CHECK(silverman_bandwidth(x2, w2) == doctest::Approx(1.06 * std::sqrt(0.75) * std::pow(1.6, -0.2)).epsilon(1e-14));

    const std::vector<double> same{2, 2, 2};
    const std::vector<double> w3{1, 1, 1};
    CHECK_THROWS_WITH_AS(silverman_bandwidth(same, w3), doctest::Contains("degenerate sample"), NumericError);
    const std::vector<double> zero{0, 0, 0};
    CHECK_THROWS_AS(silverman_bandwidth(x2, std::vector<double>{0, 0}), ValidationError);
    (void)zero;
}

TEST_CASE("silverman bandwidth for a standard normal sample of size 1000") {
    // Population sd is 1, so h should sit near 1.06 * 1000^{-1/5}.
    const auto x = normal_draws(1000, 0.0, 1.0, 77);
    const std::vector<double> w(x.size(), 1.0);
    CHECK(silverman_bandwidth(x, w) == doctest::Approx(0.2662599617400155).epsilon(0.05));
}

TEST_CASE("gaussian kernel weights") {
    const Matrix pts{{0.0, 0.0}, {1.0, 0.0}, {1.0, 2.0}};
    const std::vector<double> center{0.0, 0.0};
    const std::vector<double> bw{1.0, 2.0};
    const auto w = gaussian_kernel_weights(pts, center, bw);
    CHECK(w[0] == doctest::Approx(1.0));
    CHECK(w[1] == doctest::Approx(0.6065306597126334));
    CHECK(w[2] == doctest::Approx(0.6065306597126334 * 0.6065306597126334));

    const Matrix none(3, 0);
    const auto ones = gaussian_kernel_weights(none, std::vector<double>{}, std::vector<double>{});
    CHECK(ones == std::vector<double>{1.0, 1.0, 1.0});

    const std::vector<std::size_t> cols{1};
    const std::vector<double> c1{2.0};
    const std::vector<double> b1{1.0};
    const auto wc = gaussian_kernel_weights(pts, cols, c1, b1);
    CHECK(wc[0] == doctest::Approx(std::exp(-2.0)));
    CHECK(wc[2] == doctest::Approx(1.0));
}

TEST_CASE("weighted kde of a single point is a gaussian bump") {
    const std::vector<double> x{0.0};
    const std::vector<double> w{1.0};
    const Grid g({-1.0, 0.0, 1.0});
    const auto f = weighted_kde(x, w, 1.0, g);
    CHECK(f[1] == doctest::Approx(0.3989422804014327));
    CHECK(f[0] == doctest::Approx(0.24197072451914337));
    CHECK(f[2] == doctest::Approx(0.24197072451914337));
}

TEST_CASE("cdf and quantile of a tabulated standard normal") {
    const auto g = Grid::linspace(-8.0, 8.0, 4001);
    std::vector<double> pdf(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) pdf[i] = std::exp(-0.5 * g[i] * g[i]) / std::sqrt(2.0 * M_PI);
    const auto cdf = cdf_from_density(g, pdf);
    CHECK(cdf.values.back() == 1.0);
    CHECK(cdf(0.0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-5));
    CHECK(cdf(-100.0) == 0.0);
    CHECK(cdf(100.0) == 1.0);
    CHECK(quantile_from_cdf(cdf, 0.975) == doctest::Approx(1.959963984540054).epsilon(1e-4));
    CHECK_THROWS_AS(quantile_from_cdf(cdf, 0.0), ValidationError);
    CHECK_THROWS_AS(quantile_from_cdf(cdf, 1.0), ValidationError);
    CHECK(quantile_clamped(cdf, 0.0) == doctest::Approx(-8.0));
    CHECK(quantile_clamped(cdf, 1.0) <= 8.0);
}

TEST_CASE("cdf rejects negative or empty densities") {
    const Grid g({0.0, 1.0, 2.0});
    CHECK_THROWS_AS(cdf_from_density(g, std::vector<double>{0.1, -0.2, 0.1}), ValidationError);
    CHECK_THROWS_AS(cdf_from_density(g, std::vector<double>{0.0, 0.0, 0.0}), NumericError);
}

TEST_CASE("generalized inverse on a flat cdf segment") {
    EstimatedCdf cdf{Grid({0.0, 1.0, 2.0, 3.0}), {0.0, 0.5, 0.5, 1.0}};
    CHECK(quantile_from_cdf(cdf, 0.5) == doctest::Approx(1.0));
    CHECK(quantile_from_cdf(cdf, 0.25) == doctest::Approx(0.5));
    CHECK(quantile_from_cdf(cdf, 0.75) == doctest::Approx(2.5));
}

TEST_CASE("quantile on levels round trips the cdf") {
    const auto x = normal_draws(2000, 1.0, 2.0, 3);
    const std::vector<double> w(x.size(), 1.0);
    const auto fit = fit_density(x, w, 0.0);
    const auto levels = Grid::linspace(0.01, 0.99, 99);
    const auto q = quantile_on_levels(fit.cdf, levels);
    for (std::size_t i = 0; i < levels.size(); ++i) CHECK(fit.cdf(q.values[i]) == doctest::Approx(levels[i]).epsilon(1e-3));
}

TEST_CASE("fit_density grid layout and bandwidth") {
    const auto x = normal_draws(500, 0.0, 1.0, 9);
    const std::vector<double> w(x.size(), 1.0);
    const auto fit = fit_density(x, w, 0.0, 128, 1.5);
    CHECK(fit.grid().size() == 128);
    CHECK(fit.bandwidth == doctest::Approx(1.5 * silverman_bandwidth(x, w)));
    CHECK(fit.effective_size == doctest::Approx(500.0));
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    CHECK(fit.grid().front() == doctest::Approx(lo - 3.0 * fit.bandwidth));
    CHECK(fit.grid().back() == doctest::Approx(hi + 3.0 * fit.bandwidth));
    for (std::size_t i = 1; i < fit.cdf.values.size(); ++i) CHECK(fit.cdf.values[i] >= fit.cdf.values[i - 1]);
}

TEST_CASE("weight invariance: rescaling all weights changes nothing") {
    const auto x = normal_draws(300, 0.0, 1.0, 21);
    CounterRng rng(4);
    std::vector<double> w(x.size());
    for (auto& v : w) v = rng.uniform();
    std::vector<double> w2(w);
    for (auto& v : w2) v *= 37.5;
    const auto a = fit_density(x, w, 0.0);
    const auto b = fit_density(x, w2, 0.0);
    CHECK(a.bandwidth == doctest::Approx(b.bandwidth).epsilon(1e-12));
    for (double t : {-1.5, -0.3, 0.0, 0.7, 2.0}) CHECK(a.cdf(t) == doctest::Approx(b.cdf(t)).epsilon(1e-10));
}

TEST_CASE("univariate transport is monotone and pushes the source onto the target") {
    const auto x0 = normal_draws(10000, 0.0, 1.0, 100);
    const auto x1 = normal_draws(10000, 1.0, 2.0, 200);
    const std::vector<double> w(10000, 1.0);
    const auto f0 = fit_density(x0, w, 0.0);
    const auto f1 = fit_density(x1, w, 0.0);

    double prev = -INFINITY;
    for (double t = -3.0; t <= 3.0; t += 0.05) {
        const double y = univariate_transport(f0.cdf, f1.cdf, t);
        CHECK(y >= prev);
        prev = y;
        if (std::abs(t) <= 2.0) CHECK(std::abs(y - (1.0 + 2.0 * t)) < 0.15);
    }

    std::vector<double> pushed;
    for (double v : x0) pushed.push_back(univariate_transport(f0.cdf, f1.cdf, v));
    // Fresh target draws so the comparison is not against the fitting sample.
    const auto fresh = normal_draws(10000, 1.0, 2.0, 300);
    CHECK(testing::ks_statistic(pushed, fresh) < 0.03);
}

TEST_CASE("transport through a quantile table agrees with the direct inverse") {
    const auto x0 = normal_draws(1000, 0.0, 1.0, 5);
    const auto x1 = normal_draws(1000, -2.0, 0.5, 6);
    const std::vector<double> w(1000, 1.0);
    const auto f0 = fit_density(x0, w, 0.0);
    const auto f1 = fit_density(x1, w, 0.0);
    const auto q1 = quantile_on_levels(f1.cdf, Grid::linspace(1e-4, 1 - 1e-4, 2001));
    for (double t : {-1.0, 0.0, 0.5, 1.5})
        CHECK(univariate_transport(f0.cdf, q1, t) == doctest::Approx(univariate_transport(f0.cdf, f1.cdf, t)).epsilon(1e-3));
}
