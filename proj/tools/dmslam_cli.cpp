#include "dmslam/config.hpp"
#include "dmslam/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Overrides {
    std::string config;
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<int> steps;
    std::optional<int> runs;
    bool resume = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "Run config (JSON)")->required();
    cmd->add_option("--output", o.output, "Output directory");
    cmd->add_option("--seed", o.seed, "Base seed");
    cmd->add_option("--jobs", o.jobs, "Concurrent Monte Carlo runs");
    cmd->add_option("--steps", o.steps, "Truncate the trajectory to this many steps");
    cmd->add_option("--runs", o.runs, "Number of Monte Carlo runs");
    cmd->add_flag("--resume", o.resume, "Skip runs whose outputs are complete");
    cmd->add_flag("--quiet", o.quiet, "No progress output");
}

dmslam::RunConfig resolve(const Overrides& o) {
    dmslam::RunConfig c = dmslam::load_config(o.config);
    if (o.output) c.output_dir = *o.output;
    if (o.seed) c.base_seed = *o.seed;
    if (o.jobs) c.jobs = *o.jobs;
    if (o.steps) c.steps = *o.steps;
    if (o.runs) c.n_runs = *o.runs;
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Direct multipath SLAM from frequency-domain radio snapshots"};
    app.require_subcommand(1);
    Overrides o;
    auto* simulate = app.add_subcommand("simulate", "Synthesise snapshots and ground truth");
    auto* run = app.add_subcommand("run", "Run the SLAM filter on simulated snapshots");
    auto* eval = app.add_subcommand("eval", "Aggregate run logs into metric CSVs");
    auto* full = app.add_subcommand("full", "simulate, run and eval in sequence");
    for (auto* cmd : {simulate, run, eval, full}) add_common(cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        const dmslam::RunConfig config = resolve(o);
        const dmslam::pipeline::Options options{o.resume, o.quiet};
        if (simulate->parsed()) dmslam::pipeline::cli_simulate(config, options);
        if (run->parsed()) dmslam::pipeline::cli_run(config, options);
        if (eval->parsed()) dmslam::pipeline::cli_eval(config, options);
        if (full->parsed()) dmslam::pipeline::cli_full(config, options);
    } catch (const dmslam::ParseError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const dmslam::ValidationError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const dmslam::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitOk;
}
