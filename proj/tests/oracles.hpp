#pragma once

#include "dmslam/radio.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>

/// Reference computations used as test oracles, written without the library's
/// structured fast paths.
namespace dmslam::oracle {

/// ln CN(z; 0, C) by a dense LU decomposition.
inline double dense_loglik(const VectorXcd& z, const MatrixXcd& C) {
    const Eigen::PartialPivLU<MatrixXcd> lu(C);
    const double logdet = lu.matrixLU().diagonal().array().abs().log().sum();
    const double quad = std::real(z.dot(lu.solve(z)));
    return -double(z.size()) * std::log(kPi) - logdet - quad;
}

/// sum_i w_i h(tau_i) h(tau_i)^H with explicit outer products.
inline MatrixXcd outer_sum(const std::vector<double>& taus, const std::vector<double>& w,
                           const radio::Pulse& pulse) {
    MatrixXcd C = MatrixXcd::Zero(pulse.M, pulse.M);
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const VectorXcd h = radio::steering_vector(taus[i], pulse);
        C += w[i] * h * h.adjoint();
    }
    return C;
}

inline VectorXcd random_cvector(int n, double variance, std::mt19937_64& rng) {
    VectorXcd v(n);
    for (int i = 0; i < n; ++i) v[i] = radio::circular_normal(variance, rng);
    return v;
}

/// GOSPA (alpha = 2) by enumerating every partial assignment of estimates to
/// truth: paired points cost d^p, every unpaired point costs c^p / 2.
inline double brute_gospa(const std::vector<Vec2>& est, const std::vector<Vec2>& truth, double c, double p) {
    const double half = std::pow(c, p) / 2.0;
    std::vector<char> used(truth.size(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, double, int)> visit = [&](std::size_t i, double acc, int pairs) {
        if (i == est.size()) {
            const double unpaired = double(est.size() + truth.size()) - 2.0 * pairs;
            best = std::min(best, acc + half * unpaired);
            return;
        }
        visit(i + 1, acc, pairs);
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (used[j]) continue;
            used[j] = 1;
            visit(i + 1, acc + std::pow((est[i] - truth[j]).norm(), p), pairs + 1);
            used[j] = 0;
        }
    };
    visit(0, 0.0, 0);
    return std::pow(best, 1.0 / p);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("dmslam_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace dmslam::oracle
