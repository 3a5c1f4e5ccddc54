#pragma once

#include "dmslam/config.hpp"
#include "dmslam/io.hpp"
#include "dmslam/metrics.hpp"
#include "dmslam/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

/// Seeded Monte Carlo orchestration: simulate -> run -> eval.
namespace dmslam::pipeline {

/// One step of the splitmix64 generator, used as a 64-bit mixing function.
std::uint64_t splitmix64(std::uint64_t x);

/// seed_run = splitmix64(base_seed ^ splitmix64(run_index)).
std::uint64_t run_seed(std::uint64_t base_seed, int run_index);

/// Independent streams derived from a run seed: 1 = channel simulation, 2 = inference.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

/// Number of steps a config processes on a scenario.
int effective_steps(const RunConfig& config, const scene::Scenario& scenario);

/// Ground truth of one run step by step: the agent and every path per PA.
struct TruthStep {
    int k = 0;
    Vec2 agent = Vec2::Zero();
    std::vector<std::vector<scene::PropagationPath>> paths;  ///< per PA
};

struct SimulatedRun {
    io::SnapshotSet snapshots;
    std::vector<TruthStep> truth;
};

SimulatedRun simulate_run(const RunConfig& config, const scene::Scenario& scenario, int run_index);

/// CSV with one row per (step, PA, path).
std::string truth_csv(const std::vector<TruthStep>& truth, const radio::PathAmplitudeModel& amp,
                      double sigma2);

/// Anchors the map estimate of PA j is scored against at agent position p:
/// the anchors of the currently visible paths, or the PA plus every VA when
/// visibility gating is off.
std::vector<Vec2> true_anchors(const scene::Scenario& scenario, int pa_index, const Vec2& agent,
                               bool visibility_gating);

/// Runs the SLAM filter on one run's snapshots. Throws DataError when the
/// snapshot metadata disagrees with the config.
metrics::RunLog infer_run(const RunConfig& config, const scene::Scenario& scenario,
                          const io::SnapshotSet& snapshots, int run_index);

/// Files of an output directory.
struct Layout {
    std::filesystem::path root;

    [[nodiscard]] std::filesystem::path snapshot(int run) const;
    [[nodiscard]] std::filesystem::path truth(int run) const;
    [[nodiscard]] std::filesystem::path log(int run) const;
    [[nodiscard]] std::filesystem::path metrics_dir() const { return root / "metrics"; }
    [[nodiscard]] std::filesystem::path config_echo() const { return root / "config_resolved.json"; }
    [[nodiscard]] std::filesystem::path seeds() const { return root / "seeds.csv"; }
};

struct Options {
    bool resume = false;
    bool quiet = false;
};

/// Writes snapshots and ground truth of every run, plus the config echo and seed table.
void cli_simulate(const RunConfig& config, const Options& options);
/// Runs inference on every run's snapshots and writes the run logs.
void cli_run(const RunConfig& config, const Options& options);
/// Aggregates the run logs into rmse.csv, cdf.csv and gospa_pa<j>.csv.
void cli_eval(const RunConfig& config, const Options& options);
void cli_full(const RunConfig& config, const Options& options);

}  // namespace dmslam::pipeline
