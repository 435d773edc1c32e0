#include <doctest.h>

#include "seqtrans/error.hpp"
#include "seqtrans/gaussian.hpp"
#include "seqtrans/rng.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace seqtrans;
using namespace seqtrans::gaussian;

namespace {

GaussianSpec random_spec(std::size_t d, CounterRng& rng) {
    std::vector<double> mean(d);
    for (auto& m : mean) m = 4.0 * rng.uniform() - 2.0;
    return make_spec(std::move(mean), testing::random_spd(d, rng));
}

Gaussian2dParams params(double mx, double my, double sx, double sy, double r) { return {mx, my, sx, sy, r}; }

}  // namespace

TEST_CASE("univariate gaussian transport") {
    CHECK(univariate_gaussian_ot(0, 1, 1, 2, 0.0) == doctest::Approx(1.0));
    CHECK(univariate_gaussian_ot(0, 1, 1, 2, 1.5) == doctest::Approx(4.0));
    CHECK(univariate_gaussian_ot(3, 0.5, -1, 1, 3.5) == doctest::Approx(0.0));
}

TEST_CASE("sqrt_psd of a correlation matrix") {
    const auto r = sqrt_psd(Matrix{{1.0, 0.6}, {0.6, 1.0}});
    CHECK(r(0, 0) == doctest::Approx(0.9486832980505138));
    CHECK(r(1, 1) == doctest::Approx(0.9486832980505138));
    CHECK(r(0, 1) == doctest::Approx(0.31622776601683794));
    CHECK(r(1, 0) == doctest::Approx(0.31622776601683794));
}

TEST_CASE("sqrt_psd floors zero eigenvalues") {
    const auto r = sqrt_psd(Matrix{{1.0, 1.0}, {1.0, 1.0}});
    CHECK(testing::max_abs_diff(r * r, Matrix{{1.0, 1.0}, {1.0, 1.0}}) < 1e-6);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(make_spec({0.0, 0.0}, Matrix{{1.0, 2.0}, {2.0, 1.0}}), ValidationError);
    CHECK_THROWS_AS(make_spec({0.0}, Matrix{{1.0, 0.0}, {0.0, 1.0}}), ValidationError);
    CHECK_THROWS_AS(make_spec({0.0, 0.0}, Matrix{{1.0, 0.5}, {0.4, 1.0}}), ValidationError);
    CHECK_THROWS_AS(validate(params(0, 0, 1, 1, 1.0)), ValidationError);
    CHECK_THROWS_AS(validate(params(0, 0, -1, 1, 0.0)), ValidationError);
}

TEST_CASE("2d params round trip through a spec") {
    const auto p = params(1, -2, 0.5, 3, -0.4);
    const auto q = params_from_spec(spec_from_params(p));
    CHECK(q.mean_x == doctest::Approx(p.mean_x));
    CHECK(q.mean_y == doctest::Approx(p.mean_y));
    CHECK(q.sd_x == doctest::Approx(p.sd_x));
    CHECK(q.sd_y == doctest::Approx(p.sd_y));
    CHECK(q.correlation == doctest::Approx(p.correlation));
}

TEST_CASE("brenier map pushes the source covariance onto the target and is symmetric PSD") {
    CounterRng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 1 + rng.next_u64() % 6;
        const auto s0 = random_spec(d, rng);
        const auto s1 = random_spec(d, rng);
        const auto map = gaussian_ot_map(s0, s1);
        const Matrix& a = map.linear;
        CHECK(frobenius_norm(a * s0.covariance * a - s1.covariance) <= 1e-8);
        CHECK(max_abs_asymmetry(a) <= 1e-12);
        CHECK(symmetric_eigen(a).values.front() >= -1e-12);
        const auto at_mean = map(s0.mean);
        for (std::size_t i = 0; i < d; ++i) CHECK(at_mean[i] == doctest::Approx(s1.mean[i]));
    }
}

TEST_CASE("knothe map is lower triangular and pushes covariances") {
    CounterRng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 2 + rng.next_u64() % 4;
        const auto s0 = random_spec(d, rng);
        const auto s1 = random_spec(d, rng);
        const auto map = knothe_map(s0, s1);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) CHECK(map.linear(i, j) == doctest::Approx(0.0));
        for (std::size_t i = 0; i < d; ++i) CHECK(map.linear(i, i) > 0.0);
        CHECK(frobenius_norm(map.linear * s0.covariance * map.linear.transpose() - s1.covariance) <= 1e-9);
        const Matrix l = cholesky_lower(s1.covariance);
        CHECK(testing::max_abs_diff(l * l.transpose(), s1.covariance) < 1e-12);
    }
}

TEST_CASE("conditional 2d transport equals the knothe map for non-unit scales") {
    const auto p0 = params(0.0, 1.0, 2.0, 0.5, 0.6);
    const auto p1 = params(-1.0, 3.0, 0.7, 1.8, -0.3);
    const auto map = knothe_map(spec_from_params(p0), spec_from_params(p1));
    for (double x : {-2.0, 0.0, 1.3})
        for (double y : {-1.0, 0.4, 2.2}) {
            const auto got = conditional_gaussian_transport_2d(p0, p1, {x, y});
            const std::vector<double> pt{x, y};
            const auto want = map(pt);
            CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-12));
            CHECK(got[1] == doctest::Approx(want[1]).epsilon(1e-12));
        }
}

TEST_CASE("conditional 2d transport, textbook coordinates") {
    // x: univariate map. y: standardized conditional residual mapped across.
    const auto p0 = params(0, 0, 1, 1, 0.5);
    const auto p1 = params(1, 1, 1, 1, 0.0);
    const auto t = conditional_gaussian_transport_2d(p0, p1, {1.0, 1.0});
    CHECK(t[0] == doctest::Approx(2.0));
    // y | x=1 ~ N(0.5, 0.75); target y independent ~ N(1, 1).
    CHECK(t[1] == doctest::Approx(1.0 + 0.5 / std::sqrt(0.75)));
}

TEST_CASE("conditional moments") {
    const auto spec = spec_from_params(params(1, -1, 2, 3, 0.4));
    const std::vector<std::size_t> given{0};
    const std::vector<double> at{2.0};
    const auto m = conditional_moments(spec, 1, given, at);
    CHECK(m.mean == doctest::Approx(-1.0 + 0.4 * 3.0 / 2.0 * (2.0 - 1.0)));
    CHECK(m.variance == doctest::Approx(9.0 * (1.0 - 0.16)));
    const auto u = conditional_moments(spec, 1, std::vector<std::size_t>{}, std::vector<double>{});
    CHECK(u.mean == doctest::Approx(-1.0));
    CHECK(u.variance == doctest::Approx(9.0));
}

TEST_CASE("sequential gaussian transport along a full order equals knothe") {
    CounterRng rng(55);
    const auto s0 = random_spec(3, rng);
    const auto s1 = random_spec(3, rng);
    const std::vector<std::size_t> order{0, 1, 2};
    const std::vector<std::vector<std::size_t>> pars{{}, {0}, {0, 1}};
    const auto map = knothe_map(s0, s1);
    const std::vector<double> x{0.3, -1.2, 0.8};
    const auto got = sequential_gaussian_transport(s0, s1, order, pars, x);
    const auto want = map(x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("sequential gaussian transport, chain of three: reimplementation") {
    // x1 -> x2 -> x3 without x1 -> x3. Each step is an explicit conditional
    // Gaussian regression computed here from the 2x2 blocks.
    CounterRng rng(71);
    const auto s0 = random_spec(3, rng);
    const auto s1 = random_spec(3, rng);
    const std::vector<std::size_t> order{0, 1, 2};
    const std::vector<std::vector<std::size_t>> pars{{}, {0}, {1}};
    const std::vector<double> x{0.5, -0.5, 1.0};
    const auto got = sequential_gaussian_transport(s0, s1, order, pars, x);

    auto cond = [](const GaussianSpec& s, std::size_t j, std::size_t p, double v) {
        const double b = s.covariance(j, p) / s.covariance(p, p);
        return std::pair{s.mean[j] + b * (v - s.mean[p]),
                         std::sqrt(s.covariance(j, j) - b * s.covariance(j, p))};
    };
    std::vector<double> want(3);
    want[0] = s1.mean[0] + std::sqrt(s1.covariance(0, 0) / s0.covariance(0, 0)) * (x[0] - s0.mean[0]);
    for (std::size_t j = 1; j < 3; ++j) {
        const auto [m0, sd0] = cond(s0, j, j - 1, x[j - 1]);
        const auto [m1, sd1] = cond(s1, j, j - 1, want[j - 1]);
        want[j] = m1 + sd1 / sd0 * (x[j] - m0);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("rotation") {
    const auto p = params(1, 2, 1.5, 0.5, 0.3);
    const auto same = rotate(p, 0.0);
    CHECK(same.sd_x == doctest::Approx(p.sd_x));
    CHECK(same.correlation == doctest::Approx(p.correlation));
    const auto quarter = rotate(p, M_PI / 2);
    CHECK(quarter.mean_x == doctest::Approx(-2.0));
    CHECK(quarter.mean_y == doctest::Approx(1.0));
    CHECK(quarter.sd_x == doctest::Approx(0.5));
    CHECK(quarter.sd_y == doctest::Approx(1.5));
    CHECK(quarter.correlation == doctest::Approx(-0.3));
}

TEST_CASE("rotated transport at 0 and pi/2 reduces to the two knothe orders") {
    const auto p0 = params(0, 0, 1.2, 0.8, 0.5);
    const auto p1 = params(1, -1, 0.6, 1.4, -0.2);
    const auto s0 = spec_from_params(p0);
    const auto s1 = spec_from_params(p1);
    const std::vector<std::size_t> yx{1, 0};
    const std::vector<std::vector<std::size_t>> pars{{1}, {}};
    for (double x : {-1.0, 0.5})
        for (double y : {-0.5, 1.5}) {
            const auto a = rotated_transport_2d(p0, p1, 0.0, {x, y});
            const auto b = conditional_gaussian_transport_2d(p0, p1, {x, y});
            CHECK(a[0] == doctest::Approx(b[0]));
            CHECK(a[1] == doctest::Approx(b[1]));
            const auto c = rotated_transport_2d(p0, p1, M_PI / 2, {x, y});
            const std::vector<double> pt{x, y};
            const auto d = sequential_gaussian_transport(s0, s1, yx, pars, pt);
            CHECK(c[0] == doctest::Approx(d[0]).epsilon(1e-10));
            CHECK(c[1] == doctest::Approx(d[1]).epsilon(1e-10));
        }
}

TEST_CASE("markov precision check") {
    // Linear SEM s -> x1 -> x2: precision(s, x2) = 0.
    Matrix b(3, 3);
    b(1, 0) = 0.8;
    b(2, 1) = -0.5;
    const Matrix m = inverse(Matrix::identity(3) - b);
    const auto spec = make_spec({0, 0, 0}, m * m.transpose());
    Adjacency chain(3, std::vector<bool>(3, false));
    chain[0][1] = chain[1][2] = true;
    const auto ok = markov_precision_check(spec, chain, 1e-9);
    CHECK(ok.markov);
    CHECK(ok.violations.empty());

    Adjacency sparse(3, std::vector<bool>(3, false));
    sparse[0][1] = true;
    const auto bad = markov_precision_check(spec, sparse, 1e-9);
    CHECK(!bad.markov);
    REQUIRE(bad.violations.size() == 1);
    CHECK(bad.violations[0] == std::pair<std::size_t, std::size_t>{1, 2});

    const auto dag = parse_dag("s -> x1\nx1 -> x2\n@sensitive s");
    CHECK(markov_precision_check(spec, dag, 1e-9).markov);
}

TEST_CASE("gaussian sampling matches moments") {
    const auto spec = spec_from_params(params(1, -2, 2, 0.5, 0.7));
    const auto x = sample_gaussian(spec, 20000, 12);
    double mx = 0;
    double my = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        mx += x(r, 0);
        my += x(r, 1);
    }
    mx /= 20000;
    my /= 20000;
    double vx = 0;
    double vy = 0;
    double cxy = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        vx += (x(r, 0) - mx) * (x(r, 0) - mx);
        vy += (x(r, 1) - my) * (x(r, 1) - my);
        cxy += (x(r, 0) - mx) * (x(r, 1) - my);
    }
    CHECK(mx == doctest::Approx(1.0).epsilon(0.05));
    CHECK(my == doctest::Approx(-2.0).epsilon(0.02));
    CHECK(std::sqrt(vx / 20000) == doctest::Approx(2.0).epsilon(0.03));
    CHECK(cxy / std::sqrt(vx * vy) == doctest::Approx(0.7).epsilon(0.03));
    CHECK(testing::max_abs_diff(x, sample_gaussian(spec, 20000, 12)) == 0.0);
}
