#include "dmslam/metrics.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace dmslam;
using namespace dmslam::metrics;

namespace {

std::vector<Vec2> random_points(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<Vec2> out;
    for (int i = 0; i < n; ++i) out.emplace_back(u(rng), u(rng));
    return out;
}

StepRecord record(int k, Vec2 truth, Vec2 est) {
    StepRecord s;
    s.k = k;
    s.true_agent = truth;
    s.est_agent = est;
    return s;
}

}  // namespace

TEST_CASE("Hungarian assignment is optimal against all permutations") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int t = 0; t < 100; ++t) {
        const int n = 1 + t % 6;
        Eigen::MatrixXd cost(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) cost(i, j) = u(rng);
        const auto a = solve_assignment(cost);
        double got = 0.0;
        for (int i = 0; i < n; ++i) got += cost(i, a[static_cast<std::size_t>(i)]);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        double best = INFINITY;
        do {
            double c = 0.0;
            for (int i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
            best = std::min(best, c);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
    CHECK_THROWS_AS(solve_assignment(Eigen::MatrixXd(2, 3)), InvalidArgument);
}

TEST_CASE("GOSPA equals exhaustive partial-assignment enumeration") {
    std::mt19937_64 rng(7);
    for (double p : {1.0, 2.0}) {
        const GospaParams params{2.0, p, 2};
        for (int ne = 0; ne <= 4; ++ne) {
            for (int nt = 0; nt <= 4; ++nt) {
                for (int t = 0; t < 20; ++t) {
                    const auto est = random_points(ne, rng);
                    const auto truth = random_points(nt, rng);
                    CHECK(std::abs(gospa(est, truth, params).total - oracle::brute_gospa(est, truth, 2.0, p)) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("GOSPA decomposition and edge cases") {
    const GospaParams params;
    CHECK(gospa({Vec2(0.0, 0.0)}, {}, params).total == 1.0);
    CHECK(gospa({}, {Vec2(0.0, 0.0)}, params).total == 1.0);
    CHECK(gospa({}, {}, params).total == 0.0);
    CHECK(gospa({Vec2(0.4, 0.0)}, {Vec2(0.0, 0.0), Vec2(5.0, 0.0)}, params).total == doctest::Approx(1.4));
    const std::vector<Vec2> x{Vec2(1.0, 2.0), Vec2(-1.0, 0.5)};
    CHECK(gospa(x, x, params).total == 0.0);
    CHECK(gospa(x, {Vec2(0.0, 0.0)}, params).total == doctest::Approx(gospa({Vec2(0.0, 0.0)}, x, params).total));
    const auto g = gospa({Vec2(0.0, 0.0), Vec2(10.0, 0.0)}, {Vec2(0.5, 0.0)}, params);
    CHECK(g.total == doctest::Approx(1.5));
    CHECK(g.localization == doctest::Approx(0.5));
    CHECK(g.missed == 0);
    CHECK(g.false_count == 1);
    const auto far = gospa({Vec2(0.0, 0.0)}, {Vec2(3.0, 0.0)}, params);
    CHECK(far.total == doctest::Approx(2.0));
    CHECK(far.missed == 1);
    CHECK(far.false_count == 1);
    CHECK_THROWS_AS(gospa({}, {}, GospaParams{2.0, 0.5, 2}), InvalidArgument);
}

TEST_CASE("RMSE series and error CDF") {
    RunLog a, b;
    a.steps = {record(1, Vec2(0, 0), Vec2(3, 4)), record(2, Vec2(0, 0), Vec2(0, 0))};
    b.steps = {record(1, Vec2(0, 0), Vec2(0, 0)), record(2, Vec2(1, 1), Vec2(1, 2))};
    const auto rmse = rmse_series({a, b});
    REQUIRE(rmse.size() == 2);
    CHECK(rmse[0].first == 1);
    CHECK(rmse[0].second == doctest::Approx(std::sqrt(25.0 / 2.0)));
    CHECK(rmse[1].second == doctest::Approx(std::sqrt(0.5)));

    const auto cdf = error_cdf({a, b});
    REQUIRE(cdf.size() == 3);
    CHECK(cdf[0].first == 0.0);
    CHECK(cdf[0].second == doctest::Approx(0.5));
    CHECK(cdf[2].first == doctest::Approx(5.0));
    CHECK(cdf[2].second == 1.0);

    RunLog shorter;
    shorter.steps = {record(1, Vec2(0, 0), Vec2(0, 0))};
    CHECK_THROWS_AS(rmse_series({a, shorter}), InvalidArgument);
}

TEST_CASE("GOSPA series averages over runs") {
    RunLog a, b;
    StepRecord s = record(1, Vec2::Zero(), Vec2::Zero());
    s.true_anchors = {{Vec2(0.0, 0.0)}};
    s.declared = {{LoggedFeature{0, Vec2(0.5, 0.0), 0.9}}};
    a.steps = {s};
    s.declared = {{}};
    b.steps = {s};
    const auto rows = gospa_series({a, b}, 0, GospaParams{});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].total == doctest::Approx(0.75));
    CHECK(rows[0].missed == doctest::Approx(0.5));
    CHECK_THROWS_AS(gospa_series({a, b}, 1, GospaParams{}), InvalidArgument);
}
