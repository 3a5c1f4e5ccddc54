#pragma once

#include "dmslam/common.hpp"

#include <cstdint>
#include <utility>
#include <vector>

/// Evaluation: agent RMSE over Monte Carlo runs, error CDF, GOSPA mapping error.
namespace dmslam::metrics {

struct LoggedFeature {
    int pf_id = 0;
    Vec2 position = Vec2::Zero();
    double existence = 0.0;
};

struct StepRecord {
    int k = 0;
    Vec2 true_agent = Vec2::Zero();
    Vec2 est_agent = Vec2::Zero();
    std::vector<std::vector<LoggedFeature>> declared;  ///< per PA
    std::vector<std::vector<Vec2>> true_anchors;       ///< per PA: PA + visible VAs
    std::vector<double> sigma2;                        ///< per PA, MMSE estimate
};

struct RunLog {
    int run_index = 0;
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
};

struct GospaParams {
    double c = 2.0;
    double p = 1.0;
    int alpha = 2;

    void validate() const;
};

struct GospaResult {
    double total = 0.0;
    /// (sum of d^p over assigned pairs)^(1/p)
    double localization = 0.0;
    int missed = 0;
    int false_count = 0;
};

struct GospaRow {
    int k = 0;
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_count = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
/// Returns the column assigned to each row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// GOSPA with alpha = 2: optimal partial assignment with pairs restricted to
/// d < c, each unassigned point costing c^p / 2.
GospaResult gospa(const std::vector<Vec2>& estimates, const std::vector<Vec2>& truth,
                  const GospaParams& params);

/// sqrt(mean over runs of |p_hat_k - p_k|^2) per step.
std::vector<std::pair<int, double>> rmse_series(const std::vector<RunLog>& logs);

/// Empirical CDF over all per-step, per-run agent position errors.
std::vector<std::pair<double, double>> error_cdf(const std::vector<RunLog>& logs);

/// GOSPA of the declared features of one PA, averaged over runs per step.
std::vector<GospaRow> gospa_series(const std::vector<RunLog>& logs, int pa_index,
                                   const GospaParams& params);

}  // namespace dmslam::metrics
