#include <doctest.h>

#include "seqtrans/error.hpp"
#include "seqtrans/gaussian.hpp"
#include "seqtrans/gridtransport.hpp"
#include "test_support.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace seqtrans;
using namespace seqtrans::gaussian;

namespace {

const char* kFig4a = "s -> x1\ns -> x2\nx1 -> x2\n@sensitive s";

GaussianSpec spec0() { return make_spec({-1.0, -1.0}, Matrix{{1.2, 0.5}, {0.5, 1.0}}); }
GaussianSpec spec1() { return make_spec({1.5, 1.5}, Matrix{{0.8, -0.2}, {-0.2, 1.3}}); }

Dataset demo_data(std::size_t n) { return testing::gaussian_dataset(spec0(), spec1(), n, n, 42, {"x1", "x2"}); }

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("seqtrans_test_" + name)).string();
}

}  // namespace

TEST_CASE("tensor shapes and probability levels") {
    const auto ctx = fit_context(demo_data(300), parse_dag(kFig4a));
    const std::size_t k = 11;
    const auto t = build_grid_tensors(ctx, k);
    CHECK(t.k == k);
    CHECK(t.levels.size() == k);
    CHECK(t.levels[0] == doctest::Approx(1.0 / 12.0));
    CHECK(t.levels[10] == doctest::Approx(11.0 / 12.0));
    CHECK(t.order == std::vector<std::size_t>{0, 1});
    // 2 * k^{d_j + 1} entries per variable, F and Q alike.
    CHECK(t.element_count(0) == 2 * k);
    CHECK(t.element_count(1) == 2 * k * k);
    CHECK(t.variables[1].columns() == k);
    CHECK(t.variables[1].quantile[1].size() == k * k);
    CHECK(t.variables[1].parents == std::vector<std::size_t>{0});
}

TEST_CASE("tables are monotone along the value axis") {
    const auto ctx = fit_context(demo_data(300), parse_dag(kFig4a));
    const auto t = build_grid_tensors(ctx, 15);
    for (std::size_t c = 0; c < 2; ++c)
        for (int side : {0, 1})
            for (std::size_t col = 0; col < t.variables[c].columns(); ++col)
                for (std::size_t r = 1; r < t.k; ++r) {
                    CHECK(t.F(c, side, r, col) >= t.F(c, side, r - 1, col));
                    CHECK(t.Q(c, side, r, col) >= t.Q(c, side, r - 1, col));
                }
}

TEST_CASE("table columns are conditional fits at the parent grid values") {
    const auto ctx = fit_context(demo_data(300), parse_dag(kFig4a));
    const auto t = build_grid_tensors(ctx, 9);
    const std::size_t col = 4;
    const double parent = t.variables[0].value_grid[1][col];
    const std::vector<double> center{parent};
    const auto fit = fit_conditional(ctx, kTargetSide, 1, center);
    for (std::size_t r = 0; r < t.k; ++r) {
        CHECK(t.F(1, kTargetSide, r, col) == doctest::Approx(fit.fit.cdf(t.variables[1].value_grid[1][r])));
        CHECK(t.Q(1, kTargetSide, r, col) == doctest::Approx(quantile_from_cdf(fit.fit.cdf, t.levels[r])));
    }
}

TEST_CASE("grid lookup tracks the individual engine") {
    const auto ctx = fit_context(demo_data(600), parse_dag(kFig4a));
    const auto t = build_grid_tensors(ctx, 101);
    for (double a1 : {-2.0, -1.0, 0.0})
        for (double a2 : {-1.5, -0.5}) {
            const std::vector<double> a{a1, a2};
            const auto ind = transport_individual(ctx, a).transported;
            const auto near = lookup_counterfactual(t, a);
            const auto lin = lookup_counterfactual(t, a, LookupMode::interpolate);
            for (std::size_t c = 0; c < 2; ++c) {
                const double cell = t.variables[c].value_grid[1].mean_spacing();
                CHECK(std::abs(near[c] - ind[c]) <= 3 * cell);
                CHECK(std::abs(lin[c] - ind[c]) <= 2 * cell);
            }
        }
}

TEST_CASE("refining the grid does not move the answer by more than a coarse cell") {
    const auto ctx = fit_context(demo_data(400), parse_dag(kFig4a));
    const auto coarse = build_grid_tensors(ctx, 201);
    const auto fine = build_grid_tensors(ctx, 401);
    for (double a1 : {-1.8, -1.0, -0.2})
        for (double a2 : {-1.6, -0.4}) {
            const std::vector<double> a{a1, a2};
            const auto x = lookup_counterfactual(coarse, a);
            const auto y = lookup_counterfactual(fine, a);
            for (std::size_t c = 0; c < 2; ++c)
                CHECK(std::abs(x[c] - y[c]) <= 2 * coarse.variables[c].value_grid[1].mean_spacing());
        }
}

TEST_CASE("cache round trip and invalidation") {
    const auto data = demo_data(200);
    const auto dag = parse_dag(kFig4a);
    const auto t = build_grid_tensors(data, dag, 7);
    const auto path = temp_path("cache.bin");
    save_tensors(t, path);
    const auto back = load_tensors(path, data.hash(), dag.hash(), options_hash({}));
    REQUIRE(back);
    CHECK(back->k == 7);
    CHECK(back->variable_names == t.variable_names);
    CHECK(back->order == t.order);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t s = 0; s < 2; ++s) {
            CHECK(back->variables[c].cdf[s] == t.variables[c].cdf[s]);
            CHECK(back->variables[c].quantile[s] == t.variables[c].quantile[s]);
            CHECK(back->variables[c].value_grid[s].points() == t.variables[c].value_grid[s].points());
        }
    const std::vector<double> a{-1.0, -1.0};
    CHECK(lookup_counterfactual(*back, a) == lookup_counterfactual(t, a));

    CHECK(!load_tensors(path, data.hash() + 1, dag.hash(), options_hash({})));
    CHECK(!load_tensors(path, data.hash(), parse_dag("s -> x1\ns -> x2\nx2 -> x1\n@sensitive s").hash(),
                        options_hash({})));
    TransportOptions other;
    other.bandwidth_scale = 2.0;
    CHECK(options_hash(other) != options_hash({}));
    CHECK(!load_tensors(path, data.hash(), dag.hash(), options_hash(other)));
    CHECK(!load_tensors(temp_path("missing.bin"), 0, 0, 0));

    // Truncated file.
    std::filesystem::resize_file(path, 64);
    CHECK(!load_tensors(path, data.hash(), dag.hash(), options_hash({})));
    {
        std::ofstream junk(path, std::ios::binary | std::ios::trunc);
        junk << "not a tensor file";
    }
    CHECK(!load_tensors(path, data.hash(), dag.hash(), options_hash({})));
    std::filesystem::remove(path);
}

TEST_CASE("grid engine refuses too many conditioning parents") {
    // x5 has five conditioning parents.
    const auto dag = parse_dag(
        "s -> x1\nx1 -> x5\nx2 -> x5\nx3 -> x5\nx4 -> x5\nx6 -> x5\ns -> x2\ns -> x3\ns -> x4\ns -> x6\n"
        "@sensitive s");
    CounterRng rng(3);
    Matrix v(40, 6);
    std::vector<int> s(40);
    for (std::size_t r = 0; r < 40; ++r) {
        for (std::size_t c = 0; c < 6; ++c) v(r, c) = rng.normal();
        s[r] = r % 2;
    }
    const Dataset ds({"x1", "x2", "x3", "x4", "x5", "x6"}, v, s);
    CHECK_THROWS_WITH_AS(build_grid_tensors(ds, dag, 5), doctest::Contains("at most 4"), ValidationError);
}

TEST_CASE("grid lookup validation") {
    const auto t = build_grid_tensors(demo_data(100), parse_dag(kFig4a), 5);
    CHECK_THROWS_AS(lookup_counterfactual(t, std::vector<double>{1.0}), ValidationError);
    CHECK_THROWS_AS(lookup_counterfactual(t, std::vector<double>{1.0, NAN}), ValidationError);
    CHECK_THROWS_AS(build_grid_tensors(demo_data(100), parse_dag(kFig4a), 2), ValidationError);
}
