#include <doctest.h>

#include "seqtrans/error.hpp"
#include "seqtrans/linalg.hpp"
#include "seqtrans/rng.hpp"
#include "test_support.hpp"

using namespace seqtrans;

TEST_CASE("jacobi eigendecomposition reconstructs random symmetric matrices") {
    CounterRng rng(11);
    for (std::size_t d = 1; d <= 8; ++d) {
        const Matrix m = testing::random_spd(d, rng);
        const auto eig = symmetric_eigen(m);
        const Matrix back = spectral_apply(eig, [](double l) { return l; });
        CHECK(testing::max_abs_diff(back, m) < 1e-12 * d * 10);
        for (std::size_t k = 1; k < d; ++k) CHECK(eig.values[k - 1] <= eig.values[k]);
        const Matrix vtv = eig.vectors.transpose() * eig.vectors;
        CHECK(testing::max_abs_diff(vtv, Matrix::identity(d)) < 1e-12);
    }
}

TEST_CASE("eigendecomposition rejects asymmetric input") {
    CHECK_THROWS_AS(symmetric_eigen(Matrix{{1, 2}, {0, 1}}), ValidationError);
}

TEST_CASE("cholesky, solve and inverse") {
    CounterRng rng(5);
    const Matrix m = testing::random_spd(5, rng);
    const Matrix l = cholesky(m);
    CHECK(testing::max_abs_diff(l * l.transpose(), m) < 1e-12);
    const std::vector<double> b{1, -2, 0.5, 3, 0};
    const auto x = cholesky_solve(m, b);
    const auto mx = multiply(m, x);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(mx[i] == doctest::Approx(b[i]).epsilon(1e-12));
    CHECK(testing::max_abs_diff(inverse(m) * m, Matrix::identity(5)) < 1e-12);

    CHECK_THROWS_AS(cholesky(Matrix{{1, 2}, {2, 1}}), NumericError);
    CHECK_THROWS_AS(inverse(Matrix{{1, 2}, {2, 4}}), NumericError);
}

TEST_CASE("counter rng is deterministic and splittable") {
    CounterRng a(42);
    CounterRng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CounterRng c(42, 1);
    CounterRng d(42, 0);
    CHECK(c.next_u64() != d.next_u64());
    double lo = 1.0;
    double hi = 0.0;
    CounterRng u(3);
    for (int i = 0; i < 10000; ++i) {
        const double v = u.uniform();
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
}
