#include "dmslam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmslam::metrics {

void GospaParams::validate() const {
    if (!(c > 0.0)) throw InvalidArgument("GospaParams: cutoff c must be positive");
    if (!(p >= 1.0)) throw InvalidArgument("GospaParams: order p must be >= 1");
    if (alpha != 2) throw InvalidArgument("GospaParams: only alpha = 2 is supported");
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw InvalidArgument("solve_assignment: cost matrix must be square");
    if (n == 0) return {};
    constexpr double kInf = std::numeric_limits<double>::infinity();
    // Potentials u (rows), v (cols); way[j] = previous column on the augmenting path.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
    }
    return row_to_col;
}

GospaResult gospa(const std::vector<Vec2>& estimates, const std::vector<Vec2>& truth,
                  const GospaParams& params) {
    params.validate();
    const int nt = static_cast<int>(truth.size());
    const int ne = static_cast<int>(estimates.size());
    GospaResult r;
    const double cp = std::pow(params.c, params.p);
    if (nt + ne == 0) return r;

    // Rows: truth then dummies for estimates; cols: estimates then dummies for truth.
    const int n = nt + ne;
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < nt; ++i) {
        for (int j = 0; j < ne; ++j) {
            const double d = (truth[static_cast<std::size_t>(i)] - estimates[static_cast<std::size_t>(j)]).norm();
            cost(i, j) = std::min(std::pow(d, params.p), cp);
        }
        for (int j = ne; j < n; ++j) cost(i, j) = cp / 2.0;
    }
    for (int i = nt; i < n; ++i) {
        for (int j = 0; j < ne; ++j) cost(i, j) = cp / 2.0;
    }

    const auto assign = solve_assignment(cost);
    double loc = 0.0;
    int paired = 0;
    for (int i = 0; i < nt; ++i) {
        const int j = assign[static_cast<std::size_t>(i)];
        if (j < ne) {
            const double d = (truth[static_cast<std::size_t>(i)] - estimates[static_cast<std::size_t>(j)]).norm();
            if (d < params.c) {
                loc += std::pow(d, params.p);
                ++paired;
            }
        }
    }
    r.missed = nt - paired;
    r.false_count = ne - paired;
    r.localization = std::pow(loc, 1.0 / params.p);
    r.total = std::pow(loc + cp / 2.0 * (r.missed + r.false_count), 1.0 / params.p);
    return r;
}

namespace {

void require_equal_lengths(const std::vector<RunLog>& logs) {
    if (logs.empty()) throw InvalidArgument("metrics: no run logs");
    for (const auto& l : logs) {
        if (l.steps.size() != logs.front().steps.size()) {
            throw InvalidArgument("metrics: run logs differ in length");
        }
    }
}

}  // namespace

std::vector<std::pair<int, double>> rmse_series(const std::vector<RunLog>& logs) {
    require_equal_lengths(logs);
    std::vector<std::pair<int, double>> out;
    const std::size_t K = logs.front().steps.size();
    for (std::size_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (const auto& l : logs) acc += (l.steps[k].est_agent - l.steps[k].true_agent).squaredNorm();
        out.emplace_back(logs.front().steps[k].k, std::sqrt(acc / double(logs.size())));
    }
    return out;
}

std::vector<std::pair<double, double>> error_cdf(const std::vector<RunLog>& logs) {
    std::vector<double> errors;
    for (const auto& l : logs) {
        for (const auto& s : l.steps) errors.push_back((s.est_agent - s.true_agent).norm());
    }
    if (errors.empty()) throw InvalidArgument("error_cdf: no errors to summarise");
    std::sort(errors.begin(), errors.end());
    std::vector<std::pair<double, double>> out;
    const double n = double(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) {
        // Emit one point per distinct value, at the top of its jump.
        if (i + 1 < errors.size() && errors[i + 1] == errors[i]) continue;
        out.emplace_back(errors[i], double(i + 1) / n);
    }
    return out;
}

std::vector<GospaRow> gospa_series(const std::vector<RunLog>& logs, int pa_index,
                                   const GospaParams& params) {
    require_equal_lengths(logs);
    std::vector<GospaRow> out;
    const std::size_t K = logs.front().steps.size();
    const auto j = static_cast<std::size_t>(pa_index);
    for (std::size_t k = 0; k < K; ++k) {
        GospaRow row;
        row.k = logs.front().steps[k].k;
        for (const auto& l : logs) {
            const auto& s = l.steps[k];
            if (j >= s.declared.size() || j >= s.true_anchors.size()) {
                throw InvalidArgument("gospa_series: PA index out of range");
            }
            std::vector<Vec2> est;
            for (const auto& f : s.declared[j]) est.push_back(f.position);
            const auto g = gospa(est, s.true_anchors[j], params);
            row.total += g.total;
            row.localization += g.localization;
            row.missed += g.missed;
            row.false_count += g.false_count;
        }
        const double n = double(logs.size());
        row.total /= n;
        row.localization /= n;
        row.missed /= n;
        row.false_count /= n;
        out.push_back(row);
    }
    return out;
}

}  // namespace dmslam::metrics
