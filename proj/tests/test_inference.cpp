#include "dmslam/inference.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace dmslam;
using namespace dmslam::inference;

namespace {

const radio::Pulse kPulse = radio::Pulse::flat(41, 1e7);

FeatureBelief make_feature(const std::vector<Vec2>& pos, const std::vector<double>& gammas, double existence) {
    FeatureBelief f;
    f.existence = existence;
    f.positions.resize(2, static_cast<Eigen::Index>(pos.size()));
    f.intensities.resize(static_cast<Eigen::Index>(pos.size()));
    for (std::size_t i = 0; i < pos.size(); ++i) {
        f.positions.col(static_cast<Eigen::Index>(i)) = pos[i];
        f.intensities[static_cast<Eigen::Index>(i)] = gammas[i];
    }
    f.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(pos.size()), 1.0 / double(pos.size()));
    return f;
}

AgentBelief make_agent(const std::vector<Vec2>& pos) {
    AgentBelief a;
    a.states = Eigen::Matrix4Xd::Zero(4, static_cast<Eigen::Index>(pos.size()));
    for (std::size_t i = 0; i < pos.size(); ++i) a.states.col(static_cast<Eigen::Index>(i)).head<2>() = pos[i];
    a.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(pos.size()), 1.0 / double(pos.size()));
    return a;
}

NoiseBelief make_noise(std::vector<double> s) {
    NoiseBelief n;
    n.sigma2 = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    n.weights = Eigen::VectorXd::Constant(n.sigma2.size(), 1.0 / double(s.size()));
    return n;
}

double tau(const Vec2& a, const Vec2& b) { return (a - b).norm() / kSpeedOfLight; }

/// sigma2 I + sum_n existence_n sum_i w_i gamma_i h h^H with the agent at x.
MatrixXcd dense_mixture_cov(const std::vector<FeatureBelief>& fs, const Vec2& x, double sigma2) {
    MatrixXcd C = sigma2 * MatrixXcd::Identity(kPulse.M, kPulse.M);
    for (const auto& f : fs) {
        for (Eigen::Index i = 0; i < f.size(); ++i) {
            C += oracle::outer_sum({tau(f.positions.col(i), x)}, {f.existence * f.weights[i] * f.intensities[i]}, kPulse);
        }
    }
    return C;
}

}  // namespace

TEST_CASE("log-domain weight utilities") {
    Eigen::VectorXd v(3);
    v << -1000.0, -1001.0, -1002.0;
    CHECK(log_sum_exp(v) == doctest::Approx(-1000.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0))));
    const Eigen::VectorXd w = normalize_log_weights(v);
    CHECK(w.sum() == doctest::Approx(1.0));
    CHECK(w[0] / w[1] == doctest::Approx(std::exp(1.0)));
    CHECK_THROWS_AS(normalize_log_weights(Eigen::VectorXd::Constant(3, -INFINITY)), DegenerateUpdate);
    CHECK(effective_sample_size(Eigen::VectorXd::Constant(4, 0.25)) == doctest::Approx(4.0));
}

TEST_CASE("systematic resampling gives floor or ceil of N w_i copies") {
    Rng rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        Eigen::VectorXd w(7);
        for (int i = 0; i < 7; ++i) w[i] = u(rng);
        w /= w.sum();
        const int n = 50;
        const auto idx = resample_systematic(w, n, rng);
        CHECK(std::is_sorted(idx.begin(), idx.end()));
        for (int i = 0; i < 7; ++i) {
            const auto c = std::count(idx.begin(), idx.end(), i);
            CHECK(c >= static_cast<long>(std::floor(n * w[i] - 1e-9)));
            CHECK(c <= static_cast<long>(std::ceil(n * w[i] + 1e-9)));
        }
    }
    CHECK_THROWS_AS(resample_systematic(Eigen::VectorXd(), 3, rng), InvalidArgument);
}

TEST_CASE("thinning draws distinct indices") {
    Rng rng(5);
    const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(100, 0.0, 1.0).array() + 0.1;
    const auto idx = thin_indices(w / w.sum(), 16, rng);
    CHECK(idx.size() == 16);
    CHECK(std::set<int>(idx.begin(), idx.end()).size() == 16);
    CHECK(thin_indices(w, 200, rng).size() == 100);
}

TEST_CASE("existence posterior is the Bernoulli Bayes rule") {
    for (double p : {0.01, 0.3, 0.9}) {
        for (double d : {-5.0, 0.0, 3.0}) {
            const double l1 = std::exp(d), l0 = 1.0;
            CHECK(existence_posterior(p, d - 700.0, -700.0) == doctest::Approx(p * l1 / (p * l1 + (1 - p) * l0)));
        }
    }
    CHECK(existence_posterior(0.0, 5.0, 0.0) == 0.0);
    CHECK(existence_posterior(1.0, -5.0, 0.0) == 1.0);
}

TEST_CASE("expected load equals the explicit mixture covariance") {
    const auto f = make_feature({Vec2(1.0, 2.0), Vec2(-3.0, 0.5), Vec2(2.0, -2.0)}, {10.0, 4.0, 1.0}, 0.6);
    const Vec2 x(0.2, -0.1);
    const MatrixXcd expect = dense_mixture_cov({f}, x, 1.0) - MatrixXcd::Identity(kPulse.M, kPulse.M);
    CHECK((expected_load(f, x, kPulse) - expect).cwiseAbs().maxCoeff() < 1e-10);
    FeatureBelief absent = f;
    absent.existence = 0.0;
    CHECK(expected_load(absent, x, kPulse).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-particle feature update gives the closed-form existence") {
    Rng rng(17);
    const Vec2 x(0.0, 0.0), p(3.0, 1.0);
    const double sigma2 = 10.0, gamma = 200.0, prior = 0.3;
    const auto f = make_feature({p}, {gamma}, prior);
    const std::vector<FeatureBelief> fs{f};
    const LoadContext ctx = build_load_context(make_agent({x}), fs, kPulse, 16, rng);
    const VectorXcd h = radio::steering_vector(tau(p, x), kPulse);
    const VectorXcd z = oracle::random_cvector(kPulse.M, sigma2, rng) + radio::circular_normal(gamma, rng) * h;

    const FeatureUpdate up = update_feature(0, fs, ctx, make_noise({sigma2}), radio::Snapshot{z, 0, 0}, kPulse);
    const MatrixXcd C0 = sigma2 * MatrixXcd::Identity(kPulse.M, kPulse.M);
    const double l0 = oracle::dense_loglik(z, C0);
    const double l1 = oracle::dense_loglik(z, C0 + gamma * h * h.adjoint());
    CHECK(up.loglik_absent == doctest::Approx(l0).epsilon(1e-12));
    CHECK(up.loglik_present == doctest::Approx(l1).epsilon(1e-12));
    const double post = 1.0 / (1.0 + (1.0 - prior) / prior * std::exp(l0 - l1));
    CHECK(std::abs(up.belief.existence - post) < 1e-10);
}

TEST_CASE("feature update averages the load over the thinned agent particles") {
    Rng rng(23);
    const std::vector<Vec2> agents{Vec2(0.0, 0.0), Vec2(0.4, 0.1), Vec2(-0.2, 0.3)};
    const auto f = make_feature({Vec2(3.0, 1.0), Vec2(2.0, -1.5), Vec2(-1.0, 4.0)}, {300.0, 100.0, 50.0}, 0.5);
    const auto g = make_feature({Vec2(-4.0, -1.0), Vec2(-3.5, -1.2)}, {80.0, 60.0}, 0.8);
    const std::vector<FeatureBelief> fs{f, g};
    const LoadContext ctx = build_load_context(make_agent(agents), fs, kPulse, 16, rng);
    REQUIRE(ctx.agents.size() == 3);
    const double sigma2 = 5.0;
    const VectorXcd z = oracle::random_cvector(kPulse.M, 40.0, rng);
    const FeatureUpdate up = update_feature(0, fs, ctx, make_noise({sigma2}), radio::Snapshot{z, 0, 0}, kPulse);

    MatrixXcd base = MatrixXcd::Zero(kPulse.M, kPulse.M);
    for (const auto& a : agents) base += dense_mixture_cov({g}, a, sigma2);
    base /= 3.0;
    Eigen::VectorXd logw(3);
    for (int i = 0; i < 3; ++i) {
        MatrixXcd L = MatrixXcd::Zero(kPulse.M, kPulse.M);
        for (const auto& a : agents) L += oracle::outer_sum({tau(f.positions.col(i), a)}, {1.0 / 3.0}, kPulse);
        logw[i] = std::log(1.0 / 3.0) + oracle::dense_loglik(z, base + f.intensities[i] * L);
    }
    CHECK(up.loglik_absent == doctest::Approx(oracle::dense_loglik(z, base)).epsilon(1e-10));
    CHECK(up.loglik_present == doctest::Approx(log_sum_exp(logw)).epsilon(1e-10));
    const Eigen::VectorXd w = normalize_log_weights(logw);
    CHECK((up.belief.weights - w).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("agent log-likelihood uses the per-particle moment-matched covariance") {
    Rng rng(29);
    const std::vector<Vec2> agents{Vec2(0.0, 0.0), Vec2(0.5, -0.2), Vec2(-0.3, 0.6), Vec2(1.0, 1.0)};
    const AgentBelief agent = make_agent(agents);
    const std::vector<FeatureBelief> fs{
        make_feature({Vec2(3.0, 1.0), Vec2(3.1, 0.9)}, {300.0, 250.0}, 0.9),
        make_feature({Vec2(-2.0, 2.0)}, {100.0}, 0.4)};
    const NoiseBelief noise = make_noise({4.0, 6.0});
    const VectorXcd z = oracle::random_cvector(kPulse.M, 30.0, rng);
    Hypers exact;
    exact.exact_load_min_existence = 0.0;
    exact.exact_load_max_spread = INFINITY;
    const LoadContext ctx = build_load_context(agent, fs, kPulse, 16, rng);
    Eigen::VectorXd logw = Eigen::VectorXd::Zero(4);
    accumulate_agent_loglik(agent, fs, noise, radio::Snapshot{z, 0, 0}, kPulse, ctx, exact, logw);
    for (int p = 0; p < 4; ++p) {
        CHECK(logw[p] == doctest::Approx(oracle::dense_loglik(z, dense_mixture_cov(fs, agents[p], 5.0))).epsilon(1e-10));
    }
}

TEST_CASE("noise update weights each variance by its likelihood") {
    Rng rng(37);
    const auto f = make_feature({Vec2(2.0, 0.0)}, {100.0}, 1.0);
    const std::vector<FeatureBelief> fs{f};
    const LoadContext ctx = build_load_context(make_agent({Vec2::Zero()}), fs, kPulse, 16, rng);
    const NoiseBelief noise = make_noise({1.0, 10.0, 100.0});
    const VectorXcd z = oracle::random_cvector(kPulse.M, 10.0, rng);
    const NoiseBelief out = update_noise(noise, ctx, radio::Snapshot{z, 0, 0}, kPulse);
    Eigen::VectorXd logw(3);
    for (int i = 0; i < 3; ++i) logw[i] = oracle::dense_loglik(z, dense_mixture_cov(fs, Vec2::Zero(), noise.sigma2[i]));
    CHECK((out.weights - normalize_log_weights(logw)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("declaration and pruning thresholds") {
    Hypers h;
    std::vector<FeatureBelief> fs(3);
    fs[0].existence = 0.9;
    fs[1].existence = 0.2;
    fs[2].existence = 0.001;
    const auto [declared, surviving] = declare_and_prune(fs, h);
    CHECK(declared.size() == 1);
    CHECK(surviving.size() == 2);
}

TEST_CASE("initialisation puts one PF at each PA") {
    Rng rng(3);
    Hypers h;
    h.P_a = 500;
    h.P_f = 50;
    h.P_sigma = 20;
    InitParams init;
    const SlamState s = initialize(Vec2(1.0, 2.0), Vec2(0.1, 0.0), {Vec2(0.0, 0.0), Vec2(5.0, 5.0)}, {10.0, 20.0},
                                   init, h, rng);
    CHECK(s.agent.size() == 500);
    CHECK((s.agent.mean_position() - Vec2(1.0, 2.0)).norm() < 0.05);
    REQUIRE(s.pas.size() == 2);
    CHECK(s.pas[1].features.size() == 1);
    CHECK(s.pas[1].features[0].existence == 1.0);
    CHECK(s.pas[1].features[0].mean_position().isApprox(Vec2(5.0, 5.0)));
    CHECK(s.pas[1].features[0].intensities.minCoeff() >= init.pa_gamma_min * 20.0);
    CHECK(s.pas[0].noise.size() == 20);
    CHECK(s.next_pf_id == 2);
    CHECK_THROWS_AS(initialize(Vec2::Zero(), Vec2::Zero(), {Vec2::Zero()}, {}, init, h, rng), InvalidArgument);
}

TEST_CASE("regularisation keeps the particle count and finite states") {
    Rng rng(41);
    std::vector<Vec2> pos;
    std::vector<double> g;
    std::normal_distribution<double> n(0.0, 0.2);
    for (int i = 0; i < 100; ++i) {
        pos.emplace_back(3.0 + n(rng), 1.0 + n(rng));
        g.push_back(50.0 * std::exp(n(rng)));
    }
    const auto before = make_feature(pos, g, 0.7);
    FeatureBelief after = resample(before, rng);
    regularize(after, before, Vec2::Zero(), 1.0, rng);
    CHECK(after.size() == 100);
    CHECK(after.positions.allFinite());
    CHECK((after.intensities.array() > 0.0).all());
    CHECK((after.mean_position() - before.mean_position()).norm() < 0.1);
}

TEST_CASE("a filter step keeps the agent near a static truth") {
    Rng rng(43);
    Models models;
    models.pulse = kPulse;
    models.birth.bounds = {-10.0, -10.0, 10.0, 10.0};
    models.birth.cell_width = kPulse.range_resolution();
    Hypers h;
    h.P_a = 300;
    h.P_f = 50;
    h.P_sigma = 20;
    const Vec2 truth(-1.0, -1.0), pa(0.0, 0.0), va(0.0, 3.0);
    const std::vector<double> delays{tau(truth, pa), tau(truth, va)}, gammas{1e6 / 2.0, 1e6 / 32.0};
    const auto snap = [&] {
        return radio::Snapshot{radio::synthesize(std::span<const double>(delays), std::span<const double>(gammas),
                                                 1e3, kPulse, rng), 0, 0};
    };
    const radio::Snapshot first = snap();
    SlamState s = initialize(truth, Vec2::Zero(), {pa}, {reference_power(first)}, InitParams{}, h, rng);
    for (int k = 1; k <= 5; ++k) {
        radio::Snapshot z = snap();
        z.step = k;
        const StepEstimate e = step(s, {z}, models, h, rng);
        CHECK(e.step == k);
        CHECK((e.agent - truth).norm() < 0.5);
        REQUIRE(e.features.size() == 1);
        CHECK(std::any_of(e.features[0].begin(), e.features[0].end(),
                          [&](const DeclaredFeature& f) { return (f.position - pa).norm() < 0.3; }));
    }
}

TEST_CASE("agent update with every existence at zero keeps the predicted weights") {
    Rng rng(47);
    const AgentBelief agent = make_agent({Vec2(0.0, 0.0), Vec2(0.5, 0.0), Vec2(0.0, 0.7)});
    const std::vector<FeatureBelief> fs{make_feature({Vec2(3.0, 1.0)}, {300.0}, 0.0),
                                        make_feature({Vec2(-2.0, 2.0)}, {100.0}, 0.0)};
    const VectorXcd z = oracle::random_cvector(kPulse.M, 30.0, rng);
    const AgentBelief out = update_agent(agent, fs, make_noise({10.0}), radio::Snapshot{z, 0, 0}, kPulse);
    CHECK((out.weights - agent.weights).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("agent update is invariant under relabelling of PFs") {
    Rng rng(53);
    const AgentBelief agent = make_agent({Vec2(0.0, 0.0), Vec2(0.5, 0.0), Vec2(0.0, 0.7)});
    auto f = make_feature({Vec2(3.0, 1.0), Vec2(3.2, 1.1)}, {300.0, 200.0}, 0.8);
    auto g = make_feature({Vec2(-2.0, 2.0)}, {100.0}, 0.5);
    f.pf_id = 4;
    g.pf_id = 9;
    const VectorXcd z = oracle::random_cvector(kPulse.M, 30.0, rng);
    const NoiseBelief noise = make_noise({10.0});
    const AgentBelief a = update_agent(agent, {f, g}, noise, radio::Snapshot{z, 0, 0}, kPulse);
    std::swap(f.pf_id, g.pf_id);
    const AgentBelief b = update_agent(agent, {g, f}, noise, radio::Snapshot{z, 0, 0}, kPulse);
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-12);
}
