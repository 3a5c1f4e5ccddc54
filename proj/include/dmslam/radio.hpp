#pragma once

#include "dmslam/common.hpp"
#include "dmslam/scene.hpp"

#include <cmath>
#include <random>
#include <span>
#include <vector>

/// Frequency-domain radio model: sampled pulse/steering vectors, Swerling-1
/// snapshot synthesis and zero-mean circular complex Gaussian likelihoods.
namespace dmslam::radio {

template <typename Scalar>
using CVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;
template <typename Scalar>
using CMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

/// Sampled transmit spectrum H(f_m) on M bins centred at zero,
/// f_m = (m - (M-1)/2) * delta for zero-based m.
template <typename Scalar = double>
struct PulseSpec {
    int M = 41;
    Scalar delta = Scalar(1e7);
    CVector<Scalar> spectrum = CVector<Scalar>::Ones(41);

    static PulseSpec flat(int bins, Scalar spacing) {
        PulseSpec p;
        p.M = bins;
        p.delta = spacing;
        p.spectrum = CVector<Scalar>::Ones(bins);
        return p;
    }

    [[nodiscard]] Scalar frequency(int m) const {
        return (Scalar(m) - Scalar(M - 1) / Scalar(2)) * delta;
    }
    [[nodiscard]] Scalar bandwidth() const { return Scalar(M - 1) * delta; }
    /// Delay resolution expressed as a range (m).
    [[nodiscard]] Scalar range_resolution() const { return Scalar(kSpeedOfLight) / bandwidth(); }
    [[nodiscard]] bool is_flat() const {
        return (spectrum.array() - std::complex<Scalar>(1)).abs().maxCoeff() == Scalar(0);
    }

    void validate() const {
        if (M < 3 || M % 2 == 0) throw InvalidArgument("PulseSpec: M must be odd and >= 3");
        if (!(delta > Scalar(0))) throw InvalidArgument("PulseSpec: delta must be positive");
        if (spectrum.size() != M) throw InvalidArgument("PulseSpec: spectrum length != M");
        if (!spectrum.allFinite()) throw InvalidArgument("PulseSpec: non-finite spectrum");
    }
};

using Pulse = PulseSpec<double>;

/// h(tau): entry m is H(f_m) exp(-j 2 pi f_m tau).
template <typename Scalar>
CVector<Scalar> steering_vector(Scalar tau, const PulseSpec<Scalar>& pulse) {
    CVector<Scalar> h(pulse.M);
    const Scalar two_pi = Scalar(2 * kPi);
    for (int m = 0; m < pulse.M; ++m) {
        h[m] = pulse.spectrum[m] * std::polar(Scalar(1), -two_pi * pulse.frequency(m) * tau);
    }
    return h;
}

// ---- Toeplitz structure of h h^H ----
//
// (h h^H)(m, m') = H_m conj(H_m') g(m - m') with g(d) = exp(-j 2 pi d delta tau),
// so any weighted sum of outer products is diag(H) T diag(H)^H with T Hermitian
// Toeplitz. Loads are accumulated as the first column of T.

/// col[d] += sum_i weights[i] * exp(-j 2 pi d delta taus[i]), d = 0..M-1.
template <typename Scalar>
void accumulate_delay_column(std::span<const Scalar> taus, std::span<const Scalar> weights,
                             const PulseSpec<Scalar>& pulse, CVector<Scalar>& col) {
    using C = std::complex<Scalar>;
    const Eigen::Index n = static_cast<Eigen::Index>(taus.size());
    if (n == 0) return;
    Eigen::Array<C, Eigen::Dynamic, 1> cur(n), step(n);
    const Scalar w0 = -Scalar(2 * kPi) * pulse.delta;
    for (Eigen::Index i = 0; i < n; ++i) {
        cur[i] = C(weights[static_cast<std::size_t>(i)], Scalar(0));
        step[i] = std::polar(Scalar(1), w0 * taus[static_cast<std::size_t>(i)]);
    }
    for (int d = 0; d < pulse.M; ++d) {
        col[d] += cur.sum();
        if (d + 1 < pulse.M) cur *= step;
    }
}

template <typename Scalar>
CMatrix<Scalar> hermitian_toeplitz(const CVector<Scalar>& col) {
    const Eigen::Index M = col.size();
    CMatrix<Scalar> T(M, M);
    for (Eigen::Index j = 0; j < M; ++j) {
        for (Eigen::Index i = j; i < M; ++i) {
            T(i, j) = col[i - j];
            T(j, i) = std::conj(col[i - j]);
        }
        T(j, j) = std::complex<Scalar>(std::real(col[0]), Scalar(0));
    }
    return T;
}

/// diag(H) T diag(H)^H for the pulse spectrum; identity for a flat pulse.
template <typename Scalar>
CMatrix<Scalar> shape_by_spectrum(const CMatrix<Scalar>& T, const PulseSpec<Scalar>& pulse) {
    if (pulse.is_flat()) return T;
    return pulse.spectrum.asDiagonal() * T * pulse.spectrum.conjugate().asDiagonal();
}

/// Matrix sum_i w_i h(tau_i) h(tau_i)^H from its delay column.
template <typename Scalar>
CMatrix<Scalar> load_from_column(const CVector<Scalar>& col, const PulseSpec<Scalar>& pulse) {
    return shape_by_spectrum(hermitian_toeplitz(col), pulse);
}

// ---- Covariance & likelihood ----

/// Hermitian positive-definite covariance with its cached Cholesky factor.
template <typename Scalar = double>
class ModelCovariance {
public:
    using Matrix = CMatrix<Scalar>;
    using Vector = CVector<Scalar>;

    ModelCovariance() = default;

    explicit ModelCovariance(Matrix C) : C_(std::move(C)) {
        if (C_.rows() != C_.cols() || C_.rows() == 0) {
            throw InvalidArgument("ModelCovariance: matrix must be square and non-empty");
        }
        if (!C_.allFinite()) throw NumericalError("ModelCovariance: non-finite entries");
        const Scalar scale2 = C_.cwiseAbs2().maxCoeff();
        if ((C_ - C_.adjoint()).cwiseAbs2().maxCoeff() > Scalar(1e-24) * scale2) {
            throw InvalidArgument("ModelCovariance: matrix is not Hermitian");
        }
        llt_.compute(C_);
        if (llt_.info() != Eigen::Success) {
            const Scalar jitter = Scalar(1e-12) * C_.trace().real() / Scalar(C_.rows());
            C_.diagonal().array() += jitter;
            llt_.compute(C_);
            if (llt_.info() != Eigen::Success) {
                throw NumericalError("ModelCovariance: Cholesky factorisation failed");
            }
        }
        logdet_ = Scalar(2) * llt_.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
    }

    [[nodiscard]] const Matrix& matrix() const { return C_; }
    [[nodiscard]] Eigen::Index dim() const { return C_.rows(); }
    [[nodiscard]] Scalar logdet() const { return logdet_; }
    [[nodiscard]] const Eigen::LLT<Matrix>& llt() const { return llt_; }

    /// L^{-1} v, so that v^H C^{-1} v = ||L^{-1} v||^2.
    [[nodiscard]] Vector whiten(const Vector& v) const { return llt_.matrixL().solve(v); }

private:
    Matrix C_;
    Eigen::LLT<Matrix> llt_;
    Scalar logdet_ = Scalar(0);
};

using Covariance = ModelCovariance<double>;

/// ln CN(z; 0, C) = -M ln(pi) - ln det C - z^H C^{-1} z.
template <typename Scalar>
Scalar loglik(const CVector<Scalar>& z, const ModelCovariance<Scalar>& cov) {
    if (z.size() != cov.dim()) throw InvalidArgument("loglik: dimension mismatch");
    if (!z.allFinite()) throw NumericalError("loglik: non-finite measurement");
    const Scalar quad = cov.whiten(z).squaredNorm();
    return -Scalar(z.size()) * std::log(Scalar(kPi)) - cov.logdet() - quad;
}

/// ln CN(z; 0, C) for the Hermitian Toeplitz C with first column `col`
/// (C(i, j) = col[i - j] for i >= j), by the Levinson recursion in O(M^2).
template <typename Scalar>
Scalar toeplitz_loglik(const CVector<Scalar>& z, const CVector<Scalar>& col) {
    using C = std::complex<Scalar>;
    const Eigen::Index M = col.size();
    if (z.size() != M || M == 0) throw InvalidArgument("toeplitz_loglik: dimension mismatch");
    if (!z.allFinite() || !col.allFinite()) throw NumericalError("toeplitz_loglik: non-finite input");
    Scalar E = std::real(col[0]);
    if (!(E > Scalar(0))) throw NumericalError("toeplitz_loglik: matrix is not positive definite");
    Scalar logdet = std::log(E);
    CVector<Scalar> a = CVector<Scalar>::Zero(M), prev(M), x = CVector<Scalar>::Zero(M);
    a[0] = C(1);
    x[0] = z[0] / E;
    for (Eigen::Index k = 0; k + 1 < M; ++k) {
        C delta(0), eps(0);
        for (Eigen::Index j = 0; j <= k; ++j) {
            delta += col[k + 1 - j] * a[j];
            eps += col[k + 1 - j] * x[j];
        }
        const C kappa = -delta / E;
        prev.head(k + 2) = a.head(k + 2);
        for (Eigen::Index j = 1; j <= k + 1; ++j) a[j] += kappa * std::conj(prev[k + 1 - j]);
        E *= Scalar(1) - std::norm(kappa);
        if (!(E > Scalar(0))) throw NumericalError("toeplitz_loglik: matrix is not positive definite");
        logdet += std::log(E);
        const C mu = (z[k + 1] - eps) / E;
        for (Eigen::Index j = 0; j <= k + 1; ++j) x[j] += mu * std::conj(a[k + 1 - j]);
    }
    const Scalar quad = std::real(z.dot(x));
    return -Scalar(M) * std::log(Scalar(kPi)) - logdet - quad;
}

/// Log-likelihood of z under C + sign * gamma * u u^H using the matrix
/// determinant lemma and Sherman-Morrison on the cached factor of C.
template <typename Scalar>
Scalar loglik_rank_one_delta(const CVector<Scalar>& z, const ModelCovariance<Scalar>& cov,
                             const CVector<Scalar>& u, Scalar gamma, int sign) {
    if (sign != 1 && sign != -1) throw InvalidArgument("loglik_rank_one_delta: sign must be +1 or -1");
    if (!(gamma >= Scalar(0))) throw InvalidArgument("loglik_rank_one_delta: gamma must be >= 0");
    if (!z.allFinite()) throw NumericalError("loglik_rank_one_delta: non-finite measurement");
    const CVector<Scalar> a = cov.whiten(u);
    const CVector<Scalar> b = cov.whiten(z);
    const Scalar s = Scalar(1) + Scalar(sign) * gamma * a.squaredNorm();
    if (!(s > Scalar(0))) throw NumericalError("loglik_rank_one_delta: downdate is not positive definite");
    const Scalar quad = b.squaredNorm() - Scalar(sign) * gamma * std::norm(a.dot(b)) / s;
    return -Scalar(z.size()) * std::log(Scalar(kPi)) - cov.logdet() - std::log(s) - quad;
}

/// Rank-one log-likelihood evaluator that caches L^{-1} z across many
/// candidate (u, gamma) pairs; used by the per-particle feature updates.
template <typename Scalar = double>
class RankOneLoglik {
public:
    RankOneLoglik(const CVector<Scalar>& z, const ModelCovariance<Scalar>& cov)
        : cov_(&cov), b_(cov.whiten(z)) {
        base_ = -Scalar(z.size()) * std::log(Scalar(kPi)) - cov.logdet() - b_.squaredNorm();
    }

    /// ln CN(z; 0, C) for the base covariance.
    [[nodiscard]] Scalar base() const { return base_; }

    /// ln CN(z; 0, C + gamma u u^H) for gamma >= 0, with a = L^{-1} u precomputed.
    [[nodiscard]] Scalar with_whitened(const CVector<Scalar>& a, Scalar gamma) const {
        const Scalar s = Scalar(1) + gamma * a.squaredNorm();
        return base_ - std::log(s) + gamma * std::norm(a.dot(b_)) / s;
    }

    [[nodiscard]] Scalar with(const CVector<Scalar>& u, Scalar gamma) const {
        return with_whitened(cov_->whiten(u), gamma);
    }

private:
    const ModelCovariance<Scalar>* cov_;
    CVector<Scalar> b_;
    Scalar base_ = Scalar(0);
};

// ---- Snapshots & synthesis ----

struct Snapshot {
    VectorXcd z;
    int pa_index = 0;
    int step = 0;
};

inline double loglik(const Snapshot& s, const Covariance& cov) { return loglik(s.z, cov); }

/// Ground-truth path intensity: inverse-square law with a per-bounce loss.
struct PathAmplitudeModel {
    double gamma_ref = 1e6;
    double d_ref = 1.0;
    double reflection_loss_db = 3.0;

    [[nodiscard]] double intensity(double distance, int bounce) const {
        const double d = std::max(distance, 1e-3);
        return gamma_ref * (d_ref / d) * (d_ref / d) *
               std::pow(10.0, -double(bounce) * reflection_loss_db / 10.0);
    }

    void validate() const {
        if (!(gamma_ref > 0.0)) throw InvalidArgument("PathAmplitudeModel: gamma_ref must be positive");
        if (!(d_ref > 0.0)) throw InvalidArgument("PathAmplitudeModel: d_ref must be positive");
        if (!(reflection_loss_db >= 0.0)) throw InvalidArgument("PathAmplitudeModel: negative loss");
    }
};

/// Draw from CN(0, variance).
template <typename Rng>
std::complex<double> circular_normal(double variance, Rng& rng) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

/// z = sum_l rho_l h(tau_l) + eps, rho_l ~ CN(0, gamma_l), eps ~ CN(0, sigma2 I).
template <typename Rng>
VectorXcd synthesize(std::span<const double> delays, std::span<const double> intensities,
                     double sigma2, const Pulse& pulse, Rng& rng) {
    if (!(sigma2 > 0.0)) throw InvalidArgument("synthesize: sigma2 must be positive");
    if (delays.size() != intensities.size()) throw InvalidArgument("synthesize: size mismatch");
    VectorXcd z = VectorXcd::Zero(pulse.M);
    for (std::size_t l = 0; l < delays.size(); ++l) {
        const std::complex<double> rho = circular_normal(intensities[l], rng);
        z += rho * steering_vector(delays[l], pulse);
    }
    for (int m = 0; m < pulse.M; ++m) z[m] += circular_normal(sigma2, rng);
    return z;
}

template <typename Rng>
Snapshot synthesize_snapshot(const std::vector<scene::PropagationPath>& paths,
                             const PathAmplitudeModel& amp, double sigma2, const Pulse& pulse,
                             Rng& rng) {
    std::vector<double> delays, gammas;
    for (const auto& p : paths) {
        delays.push_back(p.delay);
        gammas.push_back(amp.intensity(p.length(), p.bounce));
    }
    Snapshot s;
    s.z = synthesize(std::span<const double>(delays), std::span<const double>(gammas), sigma2,
                     pulse, rng);
    s.pa_index = paths.empty() ? 0 : paths.front().pa_index;
    return s;
}

/// A point feature as seen by the measurement model.
struct PointFeature {
    Vec2 position;
    double intensity = 0.0;
    bool exists = true;
};

/// C = sigma2 I + sum over existing features of gamma h(tau) h(tau)^H.
inline Covariance model_covariance(const Vec2& agent, const std::vector<PointFeature>& features,
                                   double sigma2, const Pulse& pulse) {
    if (!(sigma2 > 0.0)) throw InvalidArgument("model_covariance: sigma2 must be positive");
    MatrixXcd C = sigma2 * MatrixXcd::Identity(pulse.M, pulse.M);
    for (const auto& f : features) {
        if (!(f.intensity >= 0.0)) throw InvalidArgument("model_covariance: negative intensity");
        if (!f.exists) continue;
        const VectorXcd h = steering_vector((agent - f.position).norm() / kSpeedOfLight, pulse);
        C.noalias() += f.intensity * h * h.adjoint();
    }
    return Covariance(std::move(C));
}

}  // namespace dmslam::radio
