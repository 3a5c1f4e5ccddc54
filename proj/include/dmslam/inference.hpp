#pragma once

#include "dmslam/common.hpp"
#include "dmslam/dynamics.hpp"
#include "dmslam/radio.hpp"

#include <random>
#include <utility>
#include <vector>

/// Particle-based belief propagation for direct multipath SLAM.
///
/// Per time step and PA the measurement-update messages are mixtures of
/// zero-mean complex Gaussians in z. Each is replaced by a single zero-mean
/// Gaussian whose covariance is the mixture's covariance: the variable the
/// message is addressed to stays fixed (agent particle, feature particle or
/// noise-variance particle) and every other variable enters through the
/// expectation of its contribution r * gamma * h h^H. Those expectations are
/// linear in the beliefs, so the cost is linear in the number of PFs.
namespace dmslam::inference {

using Rng = std::mt19937_64;

/// Weighted particle set over agent position and velocity.
struct AgentBelief {
    Eigen::Matrix4Xd states;  ///< columns (px, py, vx, vy)
    Eigen::VectorXd weights;

    [[nodiscard]] Eigen::Index size() const { return states.cols(); }
    [[nodiscard]] Vec2 mean_position() const { return states.topRows<2>() * weights; }
    [[nodiscard]] Eigen::Vector4d mean() const { return states * weights; }
};

/// Bernoulli potential feature: existence probability plus particles over
/// (position, intensity) representing the r = 1 branch.
struct FeatureBelief {
    int pf_id = 0;
    int pa_index = 0;
    double existence = 0.0;
    Eigen::Matrix2Xd positions;
    Eigen::VectorXd intensities;
    Eigen::VectorXd weights;
    int origin_step = 0;

    [[nodiscard]] Eigen::Index size() const { return positions.cols(); }
    [[nodiscard]] Vec2 mean_position() const { return positions * weights; }
    [[nodiscard]] double mean_intensity() const { return intensities.dot(weights); }
    /// Square root of the largest eigenvalue of the weighted position covariance.
    [[nodiscard]] double position_spread() const;
};

/// Particles over the noise variance sigma^2 of one PA.
struct NoiseBelief {
    Eigen::VectorXd sigma2;
    Eigen::VectorXd weights;

    [[nodiscard]] Eigen::Index size() const { return sigma2.size(); }
    [[nodiscard]] double mean() const { return sigma2.dot(weights); }
};

struct Hypers {
    double T_dec = 0.5;
    double T_pru = 1e-2;
    int P_a = 2000;
    int P_f = 200;
    int P_sigma = 100;
    double ess_frac = 0.5;
    int agent_thin = 16;
    /// PFs whose predicted existence is below this enter the agent update
    /// through their load averaged over the thinned agent particles instead of
    /// a per-particle evaluation.
    double exact_load_min_existence = 1e-2;
    /// Same treatment for PFs whose position cloud is wider than this (m,
    /// square root of the largest covariance eigenvalue).
    double exact_load_max_spread = 0.3;
    /// Scale on the Gaussian-kernel optimal bandwidth used to jitter feature
    /// particles after resampling; 0 disables the regularisation.
    double kernel_scale = 1.0;

    void validate() const;
};

/// Prior at k = 0.
struct InitParams {
    double sigma_pos = 0.1;          ///< m
    double sigma_vel = 0.05;         ///< m/step
    double sigma2_min = 1e1;         ///< log-uniform noise-variance prior
    double sigma2_max = 1e5;
    double pa_gamma_min = 1e-3;      ///< PA intensity prior, multiples of the reference power
    double pa_gamma_max = 1e1;
};

struct Models {
    radio::Pulse pulse;
    dynamics::TransitionParams transition;
    dynamics::BirthModel birth;
};

/// Beliefs of the PFs and noise variance attached to one PA.
struct PaState {
    Vec2 pa_position;
    std::vector<FeatureBelief> features;
    NoiseBelief noise;
};

struct SlamState {
    AgentBelief agent;
    std::vector<PaState> pas;
    int step = 0;
    int next_pf_id = 0;
};

struct DeclaredFeature {
    int pf_id = 0;
    Vec2 position = Vec2::Zero();
    double existence = 0.0;
    double intensity = 0.0;
};

struct StepEstimate {
    int step = 0;
    Vec2 agent = Vec2::Zero();
    std::vector<std::vector<DeclaredFeature>> features;  ///< per PA
    std::vector<double> sigma2;                         ///< per PA
    std::vector<int> pf_counts;                         ///< per PA, after pruning
    int degenerate_updates = 0;
};

// ---- Weight utilities ----

double log_sum_exp(const Eigen::VectorXd& v);
/// Normalises weights given in the log domain; throws DegenerateUpdate when
/// no entry is finite.
Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& logw);
double effective_sample_size(const Eigen::VectorXd& w);
/// Systematic resampling: returns the parent index of each offspring.
std::vector<int> resample_systematic(const Eigen::VectorXd& w, int count, Rng& rng);

AgentBelief resample(const AgentBelief& b, Rng& rng);
FeatureBelief resample(const FeatureBelief& b, Rng& rng);
NoiseBelief resample(const NoiseBelief& b, Rng& rng);

/// Kernel jitter of a freshly resampled feature belief. Particles are moved in
/// (range, bearing, ln gamma) about `center` with the pre-resampling cloud
/// covariance in those coordinates, scaled by the optimal Gaussian-kernel
/// bandwidth h times kernel_scale. Particles are first shrunk towards the
/// cloud mean by sqrt(1 - h^2) so the jitter leaves mean and covariance
/// unchanged.
void regularize(FeatureBelief& resampled, const FeatureBelief& before, const Vec2& center,
                double kernel_scale, Rng& rng);

// ---- Initialisation ----

/// Gaussian agent prior around (start, velocity); one PF per PA at the known
/// PA position with existence 1 and log-uniform intensity particles;
/// log-uniform noise-variance particles.
SlamState initialize(const Vec2& start, const Vec2& velocity, const std::vector<Vec2>& pas,
                     const std::vector<double>& reference_power, const InitParams& init,
                     const Hypers& hypers, Rng& rng);

// ---- Prediction ----

AgentBelief predict(const AgentBelief& b, const dynamics::TransitionParams& params, Rng& rng);
FeatureBelief predict(const FeatureBelief& b, const dynamics::TransitionParams& params, Rng& rng);
NoiseBelief predict(const NoiseBelief& b, const dynamics::TransitionParams& params, Rng& rng);
void predict(SlamState& state, const dynamics::TransitionParams& params, Rng& rng);

/// Median of |z_m|^2; scale for the intensity priors.
double reference_power(const radio::Snapshot& z);

/// M new PFs, one per range cell, with existence p_B and particles drawn by
/// picking an agent particle by weight and sampling that particle's cell.
std::vector<FeatureBelief> spawn_births(const AgentBelief& agent, int pa_index, int step,
                                        double ref_power, const Models& models,
                                        const Hypers& hypers, int& next_pf_id, Rng& rng);

// ---- Moment-matched loads ----

/// Delay column of existence * sum_i w_i gamma_i h_i h_i^H with the agent at
/// agent_pos (see radio::accumulate_delay_column).
VectorXcd expected_load_column(const FeatureBelief& f, const Vec2& agent_pos,
                               const radio::Pulse& pulse);

/// existence * sum_i w_i gamma_i h(tau_i) h(tau_i)^H.
MatrixXcd expected_load(const FeatureBelief& f, const Vec2& agent_pos, const radio::Pulse& pulse);

/// Thinned agent particles and per-PF loads averaged over them, shared by the
/// feature, noise and (for low-existence PFs) agent updates of one PA.
struct LoadContext {
    std::vector<Vec2> agents;        ///< thinned agent positions, equal weight
    Vec2 mean_agent = Vec2::Zero();
    Eigen::MatrixXcd avg_columns;    ///< M x N, column n = averaged delay column of PF n
    VectorXcd avg_total;             ///< sum of avg_columns
};

/// Weight-proportional sampling without replacement (Efraimidis-Spirakis).
std::vector<int> thin_indices(const Eigen::VectorXd& w, int count, Rng& rng);

LoadContext build_load_context(const AgentBelief& agent, const std::vector<FeatureBelief>& features,
                               const radio::Pulse& pulse, int agent_thin, Rng& rng);

// ---- Measurement updates ----

/// Adds ln CN(z; 0, C_iota(x_p)) to logw for every agent particle, with
/// C_iota(x) = E[sigma^2] I + sum_n expected_load(n, x).
void accumulate_agent_loglik(const AgentBelief& agent, const std::vector<FeatureBelief>& features,
                             const NoiseBelief& noise, const radio::Snapshot& z,
                             const radio::Pulse& pulse, const LoadContext& ctx,
                             const Hypers& hypers, Eigen::VectorXd& logw);

/// Single-PA agent update (all features evaluated per particle).
AgentBelief update_agent(const AgentBelief& agent, const std::vector<FeatureBelief>& features,
                         const NoiseBelief& noise, const radio::Snapshot& z,
                         const radio::Pulse& pulse);

/// Result of a feature update with the quantities behind the existence update.
struct FeatureUpdate {
    FeatureBelief belief;
    double loglik_absent = 0.0;   ///< l0
    double loglik_present = 0.0;  ///< ln sum_i w_i exp(l1_i)
};

/// Update of PF n of ctx's feature list. Each particle's likelihood uses
/// C = E[sigma^2] I + (loads of the other PFs) + gamma_i E_x[h h^H], the last
/// expectation taken over the thinned agent particles.
FeatureUpdate update_feature(int n, const std::vector<FeatureBelief>& features,
                             const LoadContext& ctx, const NoiseBelief& noise,
                             const radio::Snapshot& z, const radio::Pulse& pulse);

/// First update of a newborn PF. With the agent at ctx.mean_agent the
/// likelihood depends on a particle only through its range and intensity, so
/// the posterior over (range, ln gamma) is evaluated on a grid spanning the
/// particles' support and the particles are redrawn from it, each keeping its
/// prior bearing. Same message as update_feature, integrated on a grid.
FeatureUpdate update_birth(int n, const std::vector<FeatureBelief>& features, const LoadContext& ctx,
                           const NoiseBelief& noise, const radio::Snapshot& z,
                           const radio::Pulse& pulse, Rng& rng);

/// Convenience form: thins the agent belief and updates `feature` against `others`.
FeatureBelief update_feature(const FeatureBelief& feature, const AgentBelief& agent,
                             const std::vector<FeatureBelief>& others, const NoiseBelief& noise,
                             const radio::Snapshot& z, const radio::Pulse& pulse,
                             const Hypers& hypers, Rng& rng);

/// p l1 / (p l1 + (1 - p) l0) from log-likelihoods.
double existence_posterior(double prior, double loglik_present, double loglik_absent);

/// Noise-variance update using the total averaged load of ctx.
NoiseBelief update_noise(const NoiseBelief& noise, const LoadContext& ctx, const radio::Snapshot& z,
                         const radio::Pulse& pulse);

// ---- Declaration, pruning, estimation ----

/// declared: existence > T_dec; surviving: existence >= T_pru.
std::pair<std::vector<FeatureBelief>, std::vector<FeatureBelief>> declare_and_prune(
    const std::vector<FeatureBelief>& features, const Hypers& hypers);

Vec2 estimate_agent(const AgentBelief& agent);
std::vector<DeclaredFeature> estimate_features(const std::vector<FeatureBelief>& declared);

/// One full BP step: predict, births, agent update over all PAs, feature and
/// noise updates per PA, resampling, declaration/pruning, estimation.
/// `snapshots[j]` is the measurement of PA j at this step.
StepEstimate step(SlamState& state, const std::vector<radio::Snapshot>& snapshots,
                  const Models& models, const Hypers& hypers, Rng& rng);

}  // namespace dmslam::inference
