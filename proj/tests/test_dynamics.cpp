#include "dmslam/dynamics.hpp"

#include <doctest.h>

using namespace dmslam;
using namespace dmslam::dynamics;

TEST_CASE("constant-velocity transition has mean F x and covariance sigma^2 W W^T") {
    std::mt19937_64 rng(4);
    TransitionParams params;
    params.sigma_qx = 0.2;
    const AgentState x{Vec2(1.0, -2.0), Vec2(0.3, 0.1)};
    const int n = 200000;
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    Eigen::Matrix4d second = Eigen::Matrix4d::Zero();
    for (int t = 0; t < n; ++t) {
        const Eigen::Vector4d y = agent_transition_sample(x, params, rng).vector();
        mean += y;
        second += y * y.transpose();
    }
    mean /= n;
    const Eigen::Matrix4d cov = second / n - mean * mean.transpose();
    const Eigen::Vector4d expected = params.F * x.vector();
    const Eigen::Matrix4d expected_cov = 0.04 * params.W * params.W.transpose();
    CHECK((mean - expected).cwiseAbs().maxCoeff() < 5.0 * 0.2 / std::sqrt(double(n)));
    CHECK((cov - expected_cov).cwiseAbs().maxCoeff() < 0.03 * expected_cov.maxCoeff());
}

TEST_CASE("feature transition: absent stays absent, survival frequency is p_s") {
    std::mt19937_64 rng(8);
    TransitionParams params;
    params.p_s = 0.9;
    const FeatureKinematicState phi{Vec2(1.0, 1.0), 5.0};
    CHECK_FALSE(feature_transition_sample(phi, ExistenceFlag{false}, params, rng).second.r);
    const int n = 100000;
    int alive = 0;
    for (int t = 0; t < n; ++t) alive += feature_transition_sample(phi, ExistenceFlag{true}, params, rng).second.r;
    const double se = std::sqrt(0.9 * 0.1 / n);
    CHECK(std::abs(double(alive) / n - 0.9) < 5.0 * se);
}

TEST_CASE("feature random walk keeps the intensity non-negative") {
    std::mt19937_64 rng(2);
    TransitionParams params;
    params.sigma_q_phi = {0.1, 0.1, 1.0};
    FeatureKinematicState phi{Vec2::Zero(), 0.0};
    for (int t = 0; t < 1000; ++t) {
        phi = feature_walk_sample(phi, params, rng);
        CHECK(phi.gamma >= 0.0);
    }
}

TEST_CASE("Gamma noise chain preserves the mean and has variance sigma2 c_eps") {
    std::mt19937_64 rng(6);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < n; ++t) {
        const double v = noise_var_transition_sample(100.0, 10.0, rng);
        s += v;
        s2 += v * v;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 100.0) < 5.0 * std::sqrt(1000.0 / n));
    CHECK(var == doctest::Approx(1000.0).epsilon(0.03));
    CHECK_THROWS_AS(noise_var_transition_sample(0.0, 10.0, rng), InvalidArgument);
}

TEST_CASE("birth samples land in the requested cell inside the bounds") {
    std::mt19937_64 rng(12);
    BirthModel model;
    model.bounds = {-5.0, -5.0, 5.0, 5.0};
    const Vec2 agent(1.0, 0.5);
    for (int m : {1, 3, 8}) {
        for (int t = 0; t < 200; ++t) {
            const auto phi = sample_birth(m, agent, model, model.bounds, rng, 2.0);
            CHECK(birth_cell(phi.p, agent, model) == m);
            CHECK(model.bounds.contains(phi.p));
            CHECK(phi.gamma >= model.gamma_min * 2.0);
            CHECK(phi.gamma <= model.gamma_max * 2.0);
        }
    }
    CHECK_THROWS_AS(sample_birth(200, agent, model, model.bounds, rng), DegenerateCell);
    CHECK_THROWS_AS(sample_birth(0, agent, model, model.bounds, rng), InvalidArgument);
}

TEST_CASE("cell area fraction matches the annulus area away from the boundary") {
    BirthModel model;
    model.bounds = {-10.0, -10.0, 10.0, 10.0};
    model.cell_width = 0.75;
    for (int m : {2, 5}) {
        const double r0 = (m - 1) * 0.75, r1 = m * 0.75;
        const double exact = kPi * (r1 * r1 - r0 * r0) / 400.0;
        CHECK(cell_area_fraction(m, Vec2::Zero(), model) == doctest::Approx(exact).epsilon(0.03));
    }
}

TEST_CASE("birth probability uses the override or the Poisson mean") {
    BirthModel model;
    model.bounds = {-10.0, -10.0, 10.0, 10.0};
    CHECK(birth_probability(3, Vec2::Zero(), model) == 1e-4);
    model.p_birth.reset();
    model.mu_b = 2.0;
    const double mu = 2.0 * cell_area_fraction(3, Vec2::Zero(), model);
    CHECK(birth_probability(3, Vec2::Zero(), model) == doctest::Approx(mu / (mu + 1.0)));
    CHECK(birth_probability_from_mean(1.0) == doctest::Approx(0.5));
}

TEST_CASE("parameter validation") {
    TransitionParams t;
    t.p_s = 1.5;
    CHECK_THROWS_AS(t.validate(), InvalidArgument);
    BirthModel b;
    b.gamma_min = 2.0;
    b.gamma_max = 1.0;
    CHECK_THROWS_AS(b.validate(), InvalidArgument);
}
