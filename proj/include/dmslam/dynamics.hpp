#pragma once

#include "dmslam/common.hpp"
#include "dmslam/scene.hpp"

#include <limits>
#include <optional>
#include <random>
#include <utility>

/// State-transition, survival and birth models. Time is measured in steps
/// (unit step duration), so all rates and covariances are per step.
namespace dmslam::dynamics {

using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

/// Agent position and velocity (m, m/step).
struct AgentState {
    Vec2 p = Vec2::Zero();
    Vec2 v = Vec2::Zero();

    [[nodiscard]] Eigen::Vector4d vector() const {
        Eigen::Vector4d x;
        x << p, v;
        return x;
    }
    static AgentState from_vector(const Eigen::Vector4d& x) { return {x.head<2>(), x.tail<2>()}; }
};

/// Position and intensity of a potential feature.
struct FeatureKinematicState {
    Vec2 p = Vec2::Zero();
    double gamma = 0.0;
};

/// r in {0, 1}.
struct ExistenceFlag {
    bool r = false;
};

inline Mat4 constant_velocity_F() {
    Mat4 F = Mat4::Identity();
    F.topRightCorner<2, 2>().setIdentity();
    return F;
}

inline Mat42 constant_velocity_W() {
    Mat42 W;
    W << 0.5 * Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity();
    return W;
}

struct TransitionParams {
    Mat4 F = constant_velocity_F();
    Mat42 W = constant_velocity_W();
    double sigma_qx = 1e-2;                                ///< accel std, Sigma_qx = sigma_qx^2 I_2
    Eigen::Vector3d sigma_q_phi{1e-4, 1e-4, 1e-2};         ///< random-walk std of (px, py, gamma)
    double p_s = 0.999;
    double c_eps = 10.0;

    void validate() const;
};

/// x' = F x + W q, q ~ N(0, sigma_qx^2 I_2).
template <typename Rng>
AgentState agent_transition_sample(const AgentState& x, const TransitionParams& params, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double q0 = n(rng);
    const double q1 = n(rng);
    const Eigen::Vector2d q = params.sigma_qx * Eigen::Vector2d(q0, q1);
    return AgentState::from_vector(params.F * x.vector() + params.W * q);
}

/// Random-walk step phi' = phi + q for a surviving feature; intensity kept
/// non-negative by reflection at zero.
template <typename Rng>
FeatureKinematicState feature_walk_sample(const FeatureKinematicState& phi,
                                          const TransitionParams& params, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureKinematicState out = phi;
    out.p.x() += params.sigma_q_phi[0] * n(rng);
    out.p.y() += params.sigma_q_phi[1] * n(rng);
    out.gamma = std::abs(phi.gamma + params.sigma_q_phi[2] * n(rng));
    return out;
}

/// Joint (phi, r) transition: a nonexistent feature stays nonexistent; an
/// existing one survives with probability p_s and random-walks.
template <typename Rng>
std::pair<FeatureKinematicState, ExistenceFlag> feature_transition_sample(
    const FeatureKinematicState& phi, ExistenceFlag r, const TransitionParams& params, Rng& rng) {
    if (!r.r) return {phi, ExistenceFlag{false}};
    std::bernoulli_distribution survive(params.p_s);
    if (!survive(rng)) return {phi, ExistenceFlag{false}};
    return {feature_walk_sample(phi, params, rng), ExistenceFlag{true}};
}

/// sigma2' ~ Gamma(shape = sigma2 / c_eps, scale = c_eps); mean sigma2, variance sigma2 c_eps.
template <typename Rng>
double noise_var_transition_sample(double sigma2, double c_eps, Rng& rng) {
    if (!(sigma2 > 0.0)) throw InvalidArgument("noise_var_transition_sample: sigma2 must be positive");
    if (!(c_eps > 0.0)) throw InvalidArgument("noise_var_transition_sample: c_eps must be positive");
    std::gamma_distribution<double> g(sigma2 / c_eps, c_eps);
    return std::max(g(rng), std::numeric_limits<double>::min());
}

// ---- Birth ----

/// Poisson birth process restricted to range cells around the agent.
struct BirthModel {
    /// Fixed birth probability per new PF; when unset it is derived from mu_b.
    std::optional<double> p_birth = 1e-4;
    /// Poisson mean of new features per PA and step; spatial density is
    /// uniform over the surveillance region.
    double mu_b = 0.1;
    double cell_width = kSpeedOfLight / 4e8;
    /// Log-uniform intensity prior, as multiples of a reference power.
    double gamma_min = 1e-3;
    double gamma_max = 1e1;
    scene::Bounds bounds;

    void validate() const;
};

/// One-based cell m with (m-1) w <= |p - agent| < m w.
int birth_cell(const Vec2& p, const Vec2& agent, const BirthModel& model);

/// Samples a new-feature state in cell m: position uniform over the annulus
/// intersected with the bounds, intensity log-uniform over
/// [gamma_min, gamma_max] * reference_power. Throws DegenerateCell after
/// 10^4 rejected proposals.
template <typename Rng>
FeatureKinematicState sample_birth(int m, const Vec2& agent, const BirthModel& model,
                                   const scene::Bounds& bounds, Rng& rng,
                                   double reference_power = 1.0) {
    if (m < 1) throw InvalidArgument("sample_birth: cell index must be >= 1");
    const double r0 = (m - 1) * model.cell_width;
    const double r1 = m * model.cell_width;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    FeatureKinematicState out;
    bool found = false;
    for (int attempt = 0; attempt < 10'000 && !found; ++attempt) {
        const double r = std::sqrt(r0 * r0 + u01(rng) * (r1 * r1 - r0 * r0));
        const double theta = 2.0 * kPi * u01(rng);
        const Vec2 p = agent + r * Vec2(std::cos(theta), std::sin(theta));
        if (bounds.contains(p) && birth_cell(p, agent, model) == m) {
            out.p = p;
            found = true;
        }
    }
    if (!found) {
        throw DegenerateCell("sample_birth: cell " + std::to_string(m) +
                             " does not intersect the surveillance region");
    }
    const double lo = std::log(model.gamma_min * reference_power);
    const double hi = std::log(model.gamma_max * reference_power);
    out.gamma = std::exp(lo + (hi - lo) * u01(rng));
    return out;
}

/// At most one new feature per cell: P(one or more) under Poisson(mu)
/// approximated by mu / (mu + 1).
inline double birth_probability_from_mean(double mu) { return mu / (mu + 1.0); }

/// mu / (mu + 1) with mu the expected number of births in cell m, or the
/// fixed override when set.
double birth_probability(int m, const Vec2& agent, const BirthModel& model);

/// Fraction of the bounds' area covered by cell m, by quasi-Monte Carlo
/// (Halton, 2^14 points).
double cell_area_fraction(int m, const Vec2& agent, const BirthModel& model);

}  // namespace dmslam::dynamics
