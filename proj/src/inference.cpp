#include "dmslam/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dmslam::inference {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Packs the particles of several PFs into one array of positions and load
/// coefficients existence * w_i * gamma_i.
struct PackedParticles {
    Eigen::Matrix2Xd positions;
    std::vector<double> coeffs;
    std::vector<double> taus;  // scratch

    void append(const FeatureBelief& f) {
        const Eigen::Index off = positions.cols();
        positions.conservativeResize(2, off + f.size());
        positions.rightCols(f.size()) = f.positions;
        for (Eigen::Index i = 0; i < f.size(); ++i) {
            coeffs.push_back(f.existence * f.weights[i] * f.intensities[i]);
        }
        taus.resize(coeffs.size());
    }

    void accumulate(const Vec2& agent, const radio::Pulse& pulse, VectorXcd& col) {
        const Eigen::Index n = positions.cols();
        for (Eigen::Index i = 0; i < n; ++i) {
            taus[static_cast<std::size_t>(i)] = (positions.col(i) - agent).norm() / kSpeedOfLight;
        }
        radio::accumulate_delay_column<double>(taus, coeffs, pulse, col);
    }
};

/// C = shape(Toeplitz(load_col)) + sigma2 I.
radio::Covariance covariance_from_column(const VectorXcd& load_col, double sigma2,
                                         const radio::Pulse& pulse) {
    MatrixXcd C = radio::load_from_column(load_col, pulse);
    C.diagonal().array() += sigma2;
    return radio::Covariance(std::move(C));
}

/// ln CN(z; 0, sigma2 I + load) for the load given by its delay column.
double column_loglik(const VectorXcd& z, const VectorXcd& load_col, double sigma2,
                     const radio::Pulse& pulse) {
    if (!pulse.is_flat()) return radio::loglik(z, covariance_from_column(load_col, sigma2, pulse));
    VectorXcd col = load_col;
    col[0] = std::complex<double>(col[0].real() + sigma2, 0.0);
    return radio::toeplitz_loglik(z, col);
}

/// Averaged load column of every PF of ctx except n.
VectorXcd other_load(const LoadContext& ctx, int n, const radio::Pulse& pulse) {
    VectorXcd base = VectorXcd::Zero(pulse.M);
    for (Eigen::Index k = 0; k < ctx.avg_columns.cols(); ++k) {
        if (k != n) base += ctx.avg_columns.col(k);
    }
    return base;
}

constexpr int kBirthRangeGrid = 256;
/// Agent-to-particle delay spread, in resolution cells, below which the
/// averaged load of a feature particle is treated as rank one.
constexpr double kRankOneDelaySpread = 1e-2;
constexpr int kBirthGammaGrid = 24;

double optimal_bandwidth(Eigen::Index n, int dim) {
    return std::pow(4.0 / (double(n) * (dim + 2)), 1.0 / (dim + 4));
}

}  // namespace

double FeatureBelief::position_spread() const {
    if (size() == 0) return 0.0;
    const Eigen::Matrix2Xd d = positions.colwise() - mean_position();
    const Eigen::Matrix2d cov = d * weights.asDiagonal() * d.transpose();
    return std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues()[1]));
}

void Hypers::validate() const {
    if (!(0.0 < T_pru && T_pru < T_dec && T_dec < 1.0)) {
        throw InvalidArgument("Hypers: need 0 < T_pru < T_dec < 1");
    }
    if (P_a < 100) throw InvalidArgument("Hypers: P_a must be >= 100");
    if (P_f < 50) throw InvalidArgument("Hypers: P_f must be >= 50");
    if (P_sigma < 1) throw InvalidArgument("Hypers: P_sigma must be >= 1");
    if (!(exact_load_max_spread > 0.0)) throw InvalidArgument("Hypers: exact_load_max_spread must be positive");
    if (!(ess_frac >= 0.0 && ess_frac <= 1.0)) throw InvalidArgument("Hypers: ess_frac in [0, 1]");
    if (agent_thin < 1) throw InvalidArgument("Hypers: agent_thin must be >= 1");
    if (!(kernel_scale >= 0.0)) throw InvalidArgument("Hypers: kernel_scale must be >= 0");
}

// ---- Weight utilities ----

double log_sum_exp(const Eigen::VectorXd& v) {
    if (v.size() == 0) return kNegInf;
    const double mx = v.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((v.array() - mx).exp().sum());
}

Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& logw) {
    const double lse = log_sum_exp(logw);
    if (!std::isfinite(lse)) throw DegenerateUpdate("all particle weights vanished");
    Eigen::VectorXd w = (logw.array() - lse).exp();
    return w / w.sum();
}

double effective_sample_size(const Eigen::VectorXd& w) {
    const double s2 = w.squaredNorm();
    return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

std::vector<int> resample_systematic(const Eigen::VectorXd& w, int count, Rng& rng) {
    if (w.size() == 0 || count <= 0) throw InvalidArgument("resample_systematic: empty input");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double total = w.sum();
    const double step = total / count;
    double u = u01(rng) * step;
    std::vector<int> idx(static_cast<std::size_t>(count));
    double cum = w[0];
    Eigen::Index i = 0;
    for (int k = 0; k < count; ++k) {
        while (u > cum && i + 1 < w.size()) cum += w[++i];
        idx[static_cast<std::size_t>(k)] = static_cast<int>(i);
        u += step;
    }
    return idx;
}

AgentBelief resample(const AgentBelief& b, Rng& rng) {
    const auto idx = resample_systematic(b.weights, static_cast<int>(b.size()), rng);
    AgentBelief out;
    out.states.resize(4, b.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out.states.col(static_cast<Eigen::Index>(k)) = b.states.col(idx[k]);
    out.weights = Eigen::VectorXd::Constant(b.size(), 1.0 / double(b.size()));
    return out;
}

FeatureBelief resample(const FeatureBelief& b, Rng& rng) {
    const auto idx = resample_systematic(b.weights, static_cast<int>(b.size()), rng);
    FeatureBelief out = b;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out.positions.col(static_cast<Eigen::Index>(k)) = b.positions.col(idx[k]);
        out.intensities[static_cast<Eigen::Index>(k)] = b.intensities[idx[k]];
    }
    out.weights.setConstant(1.0 / double(b.size()));
    return out;
}

NoiseBelief resample(const NoiseBelief& b, Rng& rng) {
    const auto idx = resample_systematic(b.weights, static_cast<int>(b.size()), rng);
    NoiseBelief out = b;
    for (std::size_t k = 0; k < idx.size(); ++k) out.sigma2[static_cast<Eigen::Index>(k)] = b.sigma2[idx[k]];
    out.weights.setConstant(1.0 / double(b.size()));
    return out;
}

void regularize(FeatureBelief& resampled, const FeatureBelief& before, const Vec2& center,
                double kernel_scale, Rng& rng) {
    if (kernel_scale <= 0.0 || before.size() < 2) return;
    const double h = kernel_scale * optimal_bandwidth(before.size(), 3);

    Vec2 mean_dir = Vec2::Zero();
    for (Eigen::Index i = 0; i < before.size(); ++i) {
        const Vec2 d = before.positions.col(i) - center;
        const double r = d.norm();
        if (r > 0.0) mean_dir += before.weights[i] * d / r;
    }
    const double theta0 = std::atan2(mean_dir.y(), mean_dir.x());
    const auto polar = [&](const Vec2& p, double gamma) {
        const Vec2 d = p - center;
        return Eigen::Vector3d(d.norm(), std::remainder(std::atan2(d.y(), d.x()) - theta0, 2.0 * kPi),
                               std::log(std::max(gamma, 1e-300)));
    };

    Eigen::Matrix3Xd q(3, before.size());
    for (Eigen::Index i = 0; i < before.size(); ++i) q.col(i) = polar(before.positions.col(i), before.intensities[i]);
    const Eigen::Vector3d mu = q * before.weights;
    const Eigen::Matrix3Xd dq = q.colwise() - mu;
    const Eigen::Matrix3d cov = dq * before.weights.asDiagonal() * dq.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const Eigen::Matrix3d A = es.eigenvectors() * (es.eigenvalues().cwiseMax(0.0).cwiseSqrt() * h).asDiagonal();
    const double shrink = std::sqrt(std::max(0.0, 1.0 - h * h));

    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index i = 0; i < resampled.size(); ++i) {
        const double n0 = n(rng);
        const double n1 = n(rng);
        const double n2 = n(rng);
        const Eigen::Vector3d x = shrink * polar(resampled.positions.col(i), resampled.intensities[i]) +
                                  (1.0 - shrink) * mu + A * Eigen::Vector3d(n0, n1, n2);
        const double r = std::abs(x[0]);
        const double theta = theta0 + x[1];
        resampled.positions.col(i) = center + r * Vec2(std::cos(theta), std::sin(theta));
        resampled.intensities[i] = std::exp(x[2]);
    }
}

// ---- Initialisation ----

SlamState initialize(const Vec2& start, const Vec2& velocity, const std::vector<Vec2>& pas,
                     const std::vector<double>& ref_power, const InitParams& init,
                     const Hypers& hypers, Rng& rng) {
    hypers.validate();
    if (pas.size() != ref_power.size()) throw InvalidArgument("initialize: reference power per PA required");
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    SlamState s;
    s.agent.states.resize(4, hypers.P_a);
    for (int p = 0; p < hypers.P_a; ++p) {
        const double a = n(rng), b = n(rng), c = n(rng), d = n(rng);
        s.agent.states.col(p) << start.x() + init.sigma_pos * a, start.y() + init.sigma_pos * b,
            velocity.x() + init.sigma_vel * c, velocity.y() + init.sigma_vel * d;
    }
    s.agent.weights = Eigen::VectorXd::Constant(hypers.P_a, 1.0 / hypers.P_a);

    const auto log_uniform = [&](double lo, double hi) {
        return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * u01(rng));
    };

    for (std::size_t j = 0; j < pas.size(); ++j) {
        PaState pa;
        pa.pa_position = pas[j];
        FeatureBelief f;
        f.pf_id = s.next_pf_id++;
        f.pa_index = static_cast<int>(j);
        f.existence = 1.0;
        f.origin_step = 0;
        f.positions = pas[j].replicate(1, hypers.P_f);
        f.intensities.resize(hypers.P_f);
        for (int i = 0; i < hypers.P_f; ++i) {
            f.intensities[i] = log_uniform(init.pa_gamma_min * ref_power[j], init.pa_gamma_max * ref_power[j]);
        }
        f.weights = Eigen::VectorXd::Constant(hypers.P_f, 1.0 / hypers.P_f);
        pa.features.push_back(std::move(f));

        pa.noise.sigma2.resize(hypers.P_sigma);
        for (int i = 0; i < hypers.P_sigma; ++i) pa.noise.sigma2[i] = log_uniform(init.sigma2_min, init.sigma2_max);
        pa.noise.weights = Eigen::VectorXd::Constant(hypers.P_sigma, 1.0 / hypers.P_sigma);
        s.pas.push_back(std::move(pa));
    }
    return s;
}

// ---- Prediction ----

AgentBelief predict(const AgentBelief& b, const dynamics::TransitionParams& params, Rng& rng) {
    if (b.size() == 0) throw InvalidArgument("predict: empty agent belief");
    AgentBelief out = b;
    for (Eigen::Index p = 0; p < b.size(); ++p) {
        const auto x = dynamics::AgentState::from_vector(b.states.col(p));
        out.states.col(p) = dynamics::agent_transition_sample(x, params, rng).vector();
    }
    return out;
}

FeatureBelief predict(const FeatureBelief& b, const dynamics::TransitionParams& params, Rng& rng) {
    if (b.size() == 0) throw InvalidArgument("predict: empty feature belief");
    FeatureBelief out = b;
    out.existence = params.p_s * b.existence;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        const dynamics::FeatureKinematicState phi{b.positions.col(i), b.intensities[i]};
        const auto next = dynamics::feature_walk_sample(phi, params, rng);
        out.positions.col(i) = next.p;
        out.intensities[i] = next.gamma;
    }
    return out;
}

NoiseBelief predict(const NoiseBelief& b, const dynamics::TransitionParams& params, Rng& rng) {
    if (b.size() == 0) throw InvalidArgument("predict: empty noise belief");
    NoiseBelief out = b;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        out.sigma2[i] = dynamics::noise_var_transition_sample(b.sigma2[i], params.c_eps, rng);
    }
    return out;
}

void predict(SlamState& state, const dynamics::TransitionParams& params, Rng& rng) {
    state.agent = predict(state.agent, params, rng);
    for (auto& pa : state.pas) {
        for (auto& f : pa.features) f = predict(f, params, rng);
        pa.noise = predict(pa.noise, params, rng);
    }
}

double reference_power(const radio::Snapshot& z) {
    std::vector<double> p(static_cast<std::size_t>(z.z.size()));
    for (Eigen::Index m = 0; m < z.z.size(); ++m) p[static_cast<std::size_t>(m)] = std::norm(z.z[m]);
    auto mid = p.begin() + static_cast<long>(p.size() / 2);
    std::nth_element(p.begin(), mid, p.end());
    return std::max(*mid, std::numeric_limits<double>::min());
}

std::vector<FeatureBelief> spawn_births(const AgentBelief& agent, int pa_index, int step,
                                        double ref_power, const Models& models,
                                        const Hypers& hypers, int& next_pf_id, Rng& rng) {
    const Vec2 agent_mean = agent.mean_position();
    std::vector<FeatureBelief> births;
    births.reserve(static_cast<std::size_t>(models.pulse.M));
    for (int m = 1; m <= models.pulse.M; ++m) {
        FeatureBelief f;
        f.pf_id = next_pf_id++;
        f.pa_index = pa_index;
        f.origin_step = step;
        f.existence = dynamics::birth_probability(m, agent_mean, models.birth);
        f.positions.resize(2, hypers.P_f);
        f.intensities.resize(hypers.P_f);
        f.weights = Eigen::VectorXd::Constant(hypers.P_f, 1.0 / hypers.P_f);
        const auto parents = resample_systematic(agent.weights, hypers.P_f, rng);
        try {
            for (int i = 0; i < hypers.P_f; ++i) {
                const Vec2 a = agent.states.col(parents[static_cast<std::size_t>(i)]).head<2>();
                const auto phi = dynamics::sample_birth(m, a, models.birth, models.birth.bounds, rng, ref_power);
                f.positions.col(i) = phi.p;
                f.intensities[i] = phi.gamma;
            }
        } catch (const DegenerateCell&) {
            f.existence = 0.0;
            f.positions = agent_mean.replicate(1, hypers.P_f);
            f.intensities.setZero();
        }
        births.push_back(std::move(f));
    }
    return births;
}

// ---- Loads ----

VectorXcd expected_load_column(const FeatureBelief& f, const Vec2& agent_pos,
                               const radio::Pulse& pulse) {
    VectorXcd col = VectorXcd::Zero(pulse.M);
    if (f.existence == 0.0) return col;
    std::vector<double> taus(static_cast<std::size_t>(f.size())), coeffs(static_cast<std::size_t>(f.size()));
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        taus[static_cast<std::size_t>(i)] = (f.positions.col(i) - agent_pos).norm() / kSpeedOfLight;
        coeffs[static_cast<std::size_t>(i)] = f.existence * f.weights[i] * f.intensities[i];
    }
    radio::accumulate_delay_column<double>(taus, coeffs, pulse, col);
    return col;
}

MatrixXcd expected_load(const FeatureBelief& f, const Vec2& agent_pos, const radio::Pulse& pulse) {
    return radio::load_from_column(expected_load_column(f, agent_pos, pulse), pulse);
}

std::vector<int> thin_indices(const Eigen::VectorXd& w, int count, Rng& rng) {
    const Eigen::Index n = w.size();
    if (count >= n) {
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    // key_i = ln(u_i) / w_i; the `count` largest keys form the sample.
    std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = u01(rng);
        const double key = w[i] > 0.0 ? std::log(std::max(u, 1e-300)) / w[i] : kNegInf;
        keys[static_cast<std::size_t>(i)] = {key, static_cast<int>(i)};
    }
    std::partial_sort(keys.begin(), keys.begin() + count, keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) idx[static_cast<std::size_t>(k)] = keys[static_cast<std::size_t>(k)].second;
    std::sort(idx.begin(), idx.end());
    return idx;
}

LoadContext build_load_context(const AgentBelief& agent, const std::vector<FeatureBelief>& features,
                               const radio::Pulse& pulse, int agent_thin, Rng& rng) {
    LoadContext ctx;
    for (int i : thin_indices(agent.weights, agent_thin, rng)) {
        ctx.agents.push_back(agent.states.col(i).head<2>());
    }
    ctx.mean_agent.setZero();
    for (const auto& a : ctx.agents) ctx.mean_agent += a;
    ctx.mean_agent /= double(ctx.agents.size());

    const double inv_t = 1.0 / double(ctx.agents.size());
    ctx.avg_columns = Eigen::MatrixXcd::Zero(pulse.M, static_cast<Eigen::Index>(features.size()));
    for (std::size_t n = 0; n < features.size(); ++n) {
        VectorXcd col = VectorXcd::Zero(pulse.M);
        for (const auto& a : ctx.agents) col += expected_load_column(features[n], a, pulse);
        ctx.avg_columns.col(static_cast<Eigen::Index>(n)) = col * inv_t;
    }
    ctx.avg_total = ctx.avg_columns.rowwise().sum();
    return ctx;
}

// ---- Measurement updates ----

void accumulate_agent_loglik(const AgentBelief& agent, const std::vector<FeatureBelief>& features,
                             const NoiseBelief& noise, const radio::Snapshot& z,
                             const radio::Pulse& pulse, const LoadContext& ctx,
                             const Hypers& hypers, Eigen::VectorXd& logw) {
    const double sigma2 = noise.mean();
    PackedParticles exact;
    VectorXcd shared = VectorXcd::Zero(pulse.M);
    for (std::size_t n = 0; n < features.size(); ++n) {
        if (features[n].existence >= hypers.exact_load_min_existence &&
            features[n].position_spread() <= hypers.exact_load_max_spread) {
            exact.append(features[n]);
        } else if (ctx.avg_columns.cols() > static_cast<Eigen::Index>(n)) {
            shared += ctx.avg_columns.col(static_cast<Eigen::Index>(n));
        } else {
            shared += expected_load_column(features[n], agent.mean_position(), pulse);
        }
    }
    VectorXcd col(pulse.M);
    for (Eigen::Index p = 0; p < agent.size(); ++p) {
        col = shared;
        exact.accumulate(agent.states.col(p).head<2>(), pulse, col);
        logw[p] += column_loglik(z.z, col, sigma2, pulse);
    }
}

AgentBelief update_agent(const AgentBelief& agent, const std::vector<FeatureBelief>& features,
                         const NoiseBelief& noise, const radio::Snapshot& z,
                         const radio::Pulse& pulse) {
    Hypers exact_everywhere;
    exact_everywhere.exact_load_min_existence = 0.0;
    exact_everywhere.exact_load_max_spread = std::numeric_limits<double>::infinity();
    const LoadContext none;
    Eigen::VectorXd logw = agent.weights.array().log();
    accumulate_agent_loglik(agent, features, noise, z, pulse, none, exact_everywhere, logw);
    AgentBelief out = agent;
    out.weights = normalize_log_weights(logw);
    return out;
}

double existence_posterior(double prior, double loglik_present, double loglik_absent) {
    if (prior <= 0.0) return 0.0;
    if (prior >= 1.0) return 1.0;
    const double a = std::log(prior) + loglik_present;
    const double b = std::log1p(-prior) + loglik_absent;
    if (!std::isfinite(a) && !std::isfinite(b)) return prior;
    const double mx = std::max(a, b);
    const double ea = std::exp(a - mx);
    const double eb = std::exp(b - mx);
    return ea / (ea + eb);
}

FeatureUpdate update_feature(int n, const std::vector<FeatureBelief>& features,
                             const LoadContext& ctx, const NoiseBelief& noise,
                             const radio::Snapshot& z, const radio::Pulse& pulse) {
    const FeatureBelief& f = features[static_cast<std::size_t>(n)];
    const VectorXcd base_col = other_load(ctx, n, pulse);
    const radio::Covariance cov = covariance_from_column(base_col, noise.mean(), pulse);
    const radio::RankOneLoglik<double> eval(z.z, cov);

    FeatureUpdate out;
    out.loglik_absent = eval.base();
    Eigen::VectorXd logw(f.size());
    const std::size_t S = std::max<std::size_t>(ctx.agents.size(), 1);
    const double tau_tol = kRankOneDelaySpread / pulse.bandwidth();
    std::vector<double> taus(S), avg(S, 1.0 / double(S));
    VectorXcd col(pulse.M);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        const Vec2 p = f.positions.col(i);
        if (ctx.agents.empty()) {
            taus[0] = (p - ctx.mean_agent).norm() / kSpeedOfLight;
        } else {
            for (std::size_t s = 0; s < S; ++s) taus[s] = (p - ctx.agents[s]).norm() / kSpeedOfLight;
        }
        const auto [lo, hi] = std::minmax_element(taus.begin(), taus.end());
        double l1 = 0.0;
        if (*hi - *lo <= tau_tol) {
            const double tau = std::accumulate(taus.begin(), taus.end(), 0.0) / double(S);
            l1 = eval.with(radio::steering_vector(tau, pulse), f.intensities[i]);
        } else {
            col.setZero();
            radio::accumulate_delay_column<double>(taus, avg, pulse, col);
            l1 = column_loglik(z.z, base_col + f.intensities[i] * col, noise.mean(), pulse);
        }
        logw[i] = std::log(f.weights[i]) + l1;
    }
    out.loglik_present = log_sum_exp(logw);
    out.belief = f;
    out.belief.existence = existence_posterior(f.existence, out.loglik_present, out.loglik_absent);
    if (std::isfinite(out.loglik_present)) out.belief.weights = normalize_log_weights(logw);
    return out;
}

FeatureUpdate update_birth(int n, const std::vector<FeatureBelief>& features, const LoadContext& ctx,
                           const NoiseBelief& noise, const radio::Snapshot& z,
                           const radio::Pulse& pulse, Rng& rng) {
    const FeatureBelief& f = features[static_cast<std::size_t>(n)];
    if (f.existence <= 0.0 || f.size() < 2) return update_feature(n, features, ctx, noise, z, pulse);

    const Vec2 a = ctx.mean_agent;
    Eigen::ArrayXd r(f.size()), theta(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        const Vec2 d = f.positions.col(i) - a;
        r[i] = d.norm();
        theta[i] = std::atan2(d.y(), d.x());
    }
    const double r_lo = r.minCoeff(), r_hi = r.maxCoeff();
    const double g_lo = std::log(std::max(f.intensities.minCoeff(), 1e-300));
    const double g_hi = std::log(std::max(f.intensities.maxCoeff(), 1e-300));
    if (!(r_hi > r_lo)) return update_feature(n, features, ctx, noise, z, pulse);

    const radio::Covariance cov = covariance_from_column(other_load(ctx, n, pulse), noise.mean(), pulse);
    const radio::RankOneLoglik<double> eval(z.z, cov);
    const int nr = kBirthRangeGrid;
    const int ng = g_hi > g_lo ? kBirthGammaGrid : 1;
    const double dr = (r_hi - r_lo) / nr;
    const double dg = (g_hi - g_lo) / ng;

    // Prior: uniform in area (density proportional to range) and in ln gamma.
    Eigen::VectorXd logp(nr * ng), log_prior_r(nr);
    for (int ir = 0; ir < nr; ++ir) {
        const double rc = r_lo + (ir + 0.5) * dr;
        log_prior_r[ir] = std::log(std::max(rc, 1e-12));
        const VectorXcd w = cov.whiten(radio::steering_vector(rc / kSpeedOfLight, pulse));
        for (int ig = 0; ig < ng; ++ig) {
            const double gamma = std::exp(g_lo + (ig + 0.5) * dg);
            logp[ir * ng + ig] = log_prior_r[ir] + eval.with_whitened(w, gamma);
        }
    }

    FeatureUpdate out;
    out.loglik_absent = eval.base();
    out.loglik_present = log_sum_exp(logp) - log_sum_exp(log_prior_r) - std::log(double(ng));
    out.belief = f;
    out.belief.existence = existence_posterior(f.existence, out.loglik_present, out.loglik_absent);
    if (!std::isfinite(out.loglik_present)) return out;

    const auto cells = resample_systematic(normalize_log_weights(logp), static_cast<int>(f.size()), rng);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        const int c = cells[static_cast<std::size_t>(i)];
        const double rr = r_lo + (c / ng + u01(rng)) * dr;
        const double lg = g_lo + (c % ng + u01(rng)) * dg;
        out.belief.positions.col(i) = a + rr * Vec2(std::cos(theta[i]), std::sin(theta[i]));
        out.belief.intensities[i] = std::exp(lg);
    }
    out.belief.weights.setConstant(1.0 / double(f.size()));
    return out;
}

FeatureBelief update_feature(const FeatureBelief& feature, const AgentBelief& agent,
                             const std::vector<FeatureBelief>& others, const NoiseBelief& noise,
                             const radio::Snapshot& z, const radio::Pulse& pulse,
                             const Hypers& hypers, Rng& rng) {
    std::vector<FeatureBelief> all;
    all.reserve(others.size() + 1);
    all.push_back(feature);
    all.insert(all.end(), others.begin(), others.end());
    const LoadContext ctx = build_load_context(agent, all, pulse, hypers.agent_thin, rng);
    return update_feature(0, all, ctx, noise, z, pulse).belief;
}

NoiseBelief update_noise(const NoiseBelief& noise, const LoadContext& ctx, const radio::Snapshot& z,
                         const radio::Pulse& pulse) {
    const MatrixXcd load = radio::load_from_column(
        ctx.avg_total.size() == pulse.M ? ctx.avg_total : VectorXcd::Zero(pulse.M), pulse);
    // C(sigma2) = U (Lambda + sigma2) U^H shares eigenvectors across particles.
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(load);
    const Eigen::ArrayXd lambda = es.eigenvalues().array().max(0.0);
    const Eigen::ArrayXd y2 = (es.eigenvectors().adjoint() * z.z).array().abs2();
    const double c0 = -double(pulse.M) * std::log(kPi);

    Eigen::VectorXd logw(noise.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) {
        const Eigen::ArrayXd d = lambda + noise.sigma2[i];
        logw[i] = std::log(noise.weights[i]) + c0 - d.log().sum() - (y2 / d).sum();
    }
    NoiseBelief out = noise;
    out.weights = normalize_log_weights(logw);
    return out;
}

// ---- Declaration, pruning, estimation ----

std::pair<std::vector<FeatureBelief>, std::vector<FeatureBelief>> declare_and_prune(
    const std::vector<FeatureBelief>& features, const Hypers& hypers) {
    std::vector<FeatureBelief> declared, surviving;
    for (const auto& f : features) {
        if (f.existence > hypers.T_dec) declared.push_back(f);
        if (f.existence >= hypers.T_pru) surviving.push_back(f);
    }
    return {std::move(declared), std::move(surviving)};
}

Vec2 estimate_agent(const AgentBelief& agent) { return agent.mean_position(); }

std::vector<DeclaredFeature> estimate_features(const std::vector<FeatureBelief>& declared) {
    std::vector<DeclaredFeature> out;
    out.reserve(declared.size());
    for (const auto& f : declared) {
        out.push_back({f.pf_id, f.mean_position(), f.existence, f.mean_intensity()});
    }
    return out;
}

// ---- Step ----

StepEstimate step(SlamState& state, const std::vector<radio::Snapshot>& snapshots,
                  const Models& models, const Hypers& hypers, Rng& rng) {
    if (snapshots.size() != state.pas.size()) {
        throw InvalidArgument("step: one snapshot per PA required");
    }
    StepEstimate est;
    est.step = ++state.step;
    const std::size_t J = state.pas.size();

    predict(state, models.transition, rng);

    for (std::size_t j = 0; j < J; ++j) {
        auto births = spawn_births(state.agent, static_cast<int>(j), state.step,
                                   reference_power(snapshots[j]), models, hypers,
                                   state.next_pf_id, rng);
        auto& feats = state.pas[j].features;
        feats.insert(feats.end(), std::make_move_iterator(births.begin()),
                     std::make_move_iterator(births.end()));
    }

    std::vector<LoadContext> ctx;
    ctx.reserve(J);
    for (std::size_t j = 0; j < J; ++j) {
        ctx.push_back(build_load_context(state.agent, state.pas[j].features, models.pulse,
                                         hypers.agent_thin, rng));
    }

    // Agent: product of the moment-matched messages of all PAs.
    AgentBelief updated_agent = state.agent;
    try {
        Eigen::VectorXd logw = state.agent.weights.array().log();
        for (std::size_t j = 0; j < J; ++j) {
            accumulate_agent_loglik(state.agent, state.pas[j].features, state.pas[j].noise,
                                    snapshots[j], models.pulse, ctx[j], hypers, logw);
        }
        updated_agent.weights = normalize_log_weights(logw);
    } catch (const DegenerateUpdate&) {
        ++est.degenerate_updates;
    }

    // Features and noise use the predicted agent belief.
    for (std::size_t j = 0; j < J; ++j) {
        auto& pa = state.pas[j];
        std::vector<FeatureBelief> updated;
        updated.reserve(pa.features.size());
        for (std::size_t n = 0; n < pa.features.size(); ++n) {
            const int i = static_cast<int>(n);
            updated.push_back(pa.features[n].origin_step == state.step
                                  ? update_birth(i, pa.features, ctx[j], pa.noise, snapshots[j], models.pulse, rng).belief
                                  : update_feature(i, pa.features, ctx[j], pa.noise, snapshots[j], models.pulse).belief);
        }
        pa.features = std::move(updated);
        try {
            pa.noise = update_noise(pa.noise, ctx[j], snapshots[j], models.pulse);
        } catch (const DegenerateUpdate&) {
            ++est.degenerate_updates;
        }
    }
    state.agent = std::move(updated_agent);

    // Resampling.
    if (effective_sample_size(state.agent.weights) < hypers.ess_frac * double(state.agent.size())) {
        state.agent = resample(state.agent, rng);
    }
    for (std::size_t j = 0; j < J; ++j) {
        auto& pa = state.pas[j];
        for (auto& f : pa.features) {
            if (f.existence < hypers.T_pru) continue;  // pruned below; keep its draws out of the stream
            if (effective_sample_size(f.weights) < hypers.ess_frac * double(f.size())) {
                FeatureBelief r = resample(f, rng);
                regularize(r, f, ctx[j].mean_agent, hypers.kernel_scale, rng);
                f = std::move(r);
            }
        }
        if (effective_sample_size(pa.noise.weights) < hypers.ess_frac * double(pa.noise.size())) {
            pa.noise = resample(pa.noise, rng);
        }
    }

    est.agent = estimate_agent(state.agent);
    for (auto& pa : state.pas) {
        auto [declared, surviving] = declare_and_prune(pa.features, hypers);
        est.features.push_back(estimate_features(declared));
        pa.features = std::move(surviving);
        est.sigma2.push_back(pa.noise.mean());
        est.pf_counts.push_back(static_cast<int>(pa.features.size()));
    }
    return est;
}

}  // namespace dmslam::inference
