#include "dmslam/pipeline.hpp"

#include "dmslam/inference.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace dmslam::pipeline {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t run_seed(std::uint64_t base_seed, int run_index) {
    return splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(run_index)));
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x5EEDULL));
}

int effective_steps(const RunConfig& config, const scene::Scenario& scenario) {
    const int K = scenario.trajectory.steps();
    return config.steps > 0 ? std::min(config.steps, K) : K;
}

SimulatedRun simulate_run(const RunConfig& config, const scene::Scenario& scenario, int run_index) {
    const radio::Pulse pulse = config.pulse();
    const std::uint64_t seed = run_seed(config.base_seed, run_index);
    std::mt19937_64 rng(stream_seed(seed, 1));
    const int K = effective_steps(config, scenario);
    const int J = scenario.anchors.count();

    SimulatedRun out;
    out.snapshots.M = config.M;
    out.snapshots.delta_hz = config.delta_hz;
    out.snapshots.seed = seed;
    for (int k = 0; k < K; ++k) {
        const Vec2 agent = scenario.trajectory.positions[static_cast<std::size_t>(k)];
        TruthStep t;
        t.k = k + 1;
        t.agent = agent;
        std::vector<radio::Snapshot> per_pa;
        for (int j = 0; j < J; ++j) {
            auto paths = scene::enumerate_paths(agent, j, scenario.plan, scenario.anchors);
            radio::Snapshot s = radio::synthesize_snapshot(paths, config.amplitude, config.sigma2, pulse, rng);
            s.pa_index = j;
            s.step = k + 1;
            per_pa.push_back(std::move(s));
            t.paths.push_back(std::move(paths));
        }
        out.snapshots.snapshots.push_back(std::move(per_pa));
        out.truth.push_back(std::move(t));
    }
    return out;
}

std::string truth_csv(const std::vector<TruthStep>& truth, const radio::PathAmplitudeModel& amp,
                      double sigma2) {
    std::ostringstream out;
    out << "k,agent_x,agent_y,pa,segment,anchor_x,anchor_y,delay_s,gamma,sigma2\n";
    for (const auto& t : truth) {
        for (std::size_t j = 0; j < t.paths.size(); ++j) {
            for (const auto& p : t.paths[j]) {
                out << t.k << ',' << io::format_double(t.agent.x()) << ',' << io::format_double(t.agent.y())
                    << ',' << j << ',' << (p.segment_id ? std::to_string(*p.segment_id) : std::string("los"))
                    << ',' << io::format_double(p.anchor_pos.x()) << ',' << io::format_double(p.anchor_pos.y())
                    << ',' << io::format_double(p.delay) << ','
                    << io::format_double(amp.intensity(p.length(), p.bounce)) << ','
                    << io::format_double(sigma2) << '\n';
            }
        }
    }
    return out.str();
}

std::vector<Vec2> true_anchors(const scene::Scenario& scenario, int pa_index, const Vec2& agent,
                               bool visibility_gating) {
    std::vector<Vec2> out;
    if (visibility_gating) {
        for (const auto& p : scene::enumerate_paths(agent, pa_index, scenario.plan, scenario.anchors)) {
            out.push_back(p.anchor_pos);
        }
        return out;
    }
    const Vec2 pa = scenario.anchors.pa_positions.at(static_cast<std::size_t>(pa_index));
    out.push_back(pa);
    for (const auto& s : scenario.plan.segments) out.push_back(scene::mirror_point(pa, s));
    return out;
}

metrics::RunLog infer_run(const RunConfig& config, const scene::Scenario& scenario,
                          const io::SnapshotSet& snapshots, int run_index) {
    const int K = effective_steps(config, scenario);
    const int J = scenario.anchors.count();
    const std::uint64_t seed = run_seed(config.base_seed, run_index);
    if (snapshots.M != config.M || snapshots.delta_hz != config.delta_hz) {
        throw DataError("run " + std::to_string(run_index) + ": snapshot M/delta disagree with config");
    }
    if (snapshots.pas() != J) {
        throw DataError("run " + std::to_string(run_index) + ": snapshot PA count disagrees with scenario");
    }
    if (snapshots.steps() < K) {
        throw DataError("run " + std::to_string(run_index) + ": snapshot file has " +
                        std::to_string(snapshots.steps()) + " steps, need " + std::to_string(K));
    }
    if (snapshots.seed != seed) {
        throw DataError("run " + std::to_string(run_index) + ": snapshot seed disagrees with config");
    }

    inference::Models models;
    models.pulse = config.pulse();
    models.transition = config.transition;
    models.birth = config.birth;
    models.birth.cell_width = config.resolved_cell_width();
    models.birth.bounds = scenario.plan.bounds;

    const auto& traj = scenario.trajectory.positions;
    const Vec2 v0 = traj.size() > 1 ? Vec2(traj[1] - traj[0]) : Vec2(Vec2::Zero());
    std::vector<double> ref_power;
    for (int j = 0; j < J; ++j) {
        ref_power.push_back(inference::reference_power(snapshots.snapshots[0][static_cast<std::size_t>(j)]));
    }

    inference::Rng rng(stream_seed(seed, 2));
    inference::SlamState state = inference::initialize(traj[0] - v0, v0, scenario.anchors.pa_positions,
                                                       ref_power, config.init, config.hypers, rng);
    metrics::RunLog log;
    log.run_index = run_index;
    log.seed = seed;
    for (int k = 0; k < K; ++k) {
        const auto est = inference::step(state, snapshots.snapshots[static_cast<std::size_t>(k)], models,
                                         config.hypers, rng);
        metrics::StepRecord r;
        r.k = k + 1;
        r.true_agent = traj[static_cast<std::size_t>(k)];
        r.est_agent = est.agent;
        for (int j = 0; j < J; ++j) {
            std::vector<metrics::LoggedFeature> declared;
            for (const auto& f : est.features[static_cast<std::size_t>(j)]) {
                declared.push_back({f.pf_id, f.position, f.existence});
            }
            r.declared.push_back(std::move(declared));
            r.true_anchors.push_back(true_anchors(scenario, j, r.true_agent, config.visibility_gating));
            r.sigma2.push_back(est.sigma2[static_cast<std::size_t>(j)]);
        }
        log.steps.push_back(std::move(r));
    }
    return log;
}

namespace {

std::string run_name(const char* prefix, int run, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%03d%s", prefix, run, ext);
    return buf;
}

/// Runs fn(run) for run = 0..n-1 on up to `jobs` threads. Failures are
/// collected with their run index and rethrown together once all runs finish.
void for_each_run(int n, int jobs, const std::function<void(int)>& fn) {
    std::atomic<int> next{0};
    std::mutex mu;
    std::vector<std::pair<int, std::string>> failures;
    bool data_failure = false;
    const auto worker = [&] {
        for (int run = next++; run < n; run = next++) {
            try {
                fn(run);
            } catch (const DataError& e) {
                std::lock_guard lock(mu);
                failures.emplace_back(run, e.what());
                data_failure = true;
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                failures.emplace_back(run, e.what());
            }
        }
    };
    const int threads = std::max(1, std::min(jobs, n));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failures.empty()) return;
    std::sort(failures.begin(), failures.end());
    std::string msg = std::to_string(failures.size()) + " run(s) failed:";
    for (const auto& [run, what] : failures) msg += "\n  run " + std::to_string(run) + ": " + what;
    if (data_failure) throw DataError(msg);
    throw std::runtime_error(msg);
}

void log_line(const Options& options, const std::string& msg) {
    static std::mutex mu;
    if (options.quiet) return;
    std::lock_guard lock(mu);
    std::cerr << msg << '\n';
}

bool snapshot_complete(const Layout& layout, int run, std::uint64_t seed, int K) {
    if (!std::filesystem::exists(layout.snapshot(run)) || !std::filesystem::exists(layout.truth(run))) {
        return false;
    }
    try {
        const auto set = io::read_snapshots(layout.snapshot(run));
        return set.seed == seed && set.steps() == K;
    } catch (const DataError&) {
        return false;
    }
}

bool log_complete(const Layout& layout, int run, std::uint64_t seed, int K) {
    if (!std::filesystem::exists(layout.log(run))) return false;
    try {
        const auto log = io::read_run_log(layout.log(run));
        return log.seed == seed && static_cast<int>(log.steps.size()) == K;
    } catch (const DataError&) {
        return false;
    }
}

void write_echo(const RunConfig& config, const Layout& layout) {
    io::write_text_atomic(layout.config_echo(), to_json(config).dump(2) + "\n");
    std::string seeds = "run,seed\n";
    for (int r = 0; r < config.n_runs; ++r) {
        seeds += std::to_string(r) + "," + std::to_string(run_seed(config.base_seed, r)) + "\n";
    }
    io::write_text_atomic(layout.seeds(), seeds);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::filesystem::path Layout::snapshot(int run) const { return root / "snapshots" / run_name("run_", run, ".bin"); }
std::filesystem::path Layout::truth(int run) const { return root / "truth" / run_name("truth_run", run, ".csv"); }
std::filesystem::path Layout::log(int run) const { return root / "logs" / run_name("log_run", run, ".json"); }

void cli_simulate(const RunConfig& config, const Options& options) {
    config.validate();
    const auto scenario = scene::load_scenario(config.scenario_path);
    const Layout layout{config.output_dir};
    const int K = effective_steps(config, scenario);
    write_echo(config, layout);
    for_each_run(config.n_runs, config.jobs, [&](int run) {
        const std::uint64_t seed = run_seed(config.base_seed, run);
        if (options.resume && snapshot_complete(layout, run, seed, K)) {
            log_line(options, "simulate run " + std::to_string(run) + ": complete, skipped");
            return;
        }
        const auto sim = simulate_run(config, scenario, run);
        io::write_text_atomic(layout.truth(run), truth_csv(sim.truth, config.amplitude, config.sigma2));
        io::write_snapshots(layout.snapshot(run), sim.snapshots);
    });
}

void cli_run(const RunConfig& config, const Options& options) {
    config.validate();
    const auto scenario = scene::load_scenario(config.scenario_path);
    const Layout layout{config.output_dir};
    const int K = effective_steps(config, scenario);
    for_each_run(config.n_runs, config.jobs, [&](int run) {
        const std::uint64_t seed = run_seed(config.base_seed, run);
        if (options.resume && log_complete(layout, run, seed, K)) {
            log_line(options, "run " + std::to_string(run) + ": complete, skipped");
            return;
        }
        const auto t0 = std::chrono::steady_clock::now();
        const auto snapshots = io::read_snapshots(layout.snapshot(run));
        const auto log = infer_run(config, scenario, snapshots, run);
        io::write_run_log(layout.log(run), log);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "run %d: %d steps in %.1f s", run, K, seconds_since(t0));
        log_line(options, buf);
    });
}

void cli_eval(const RunConfig& config, const Options&) {
    config.validate();
    const Layout layout{config.output_dir};
    std::vector<metrics::RunLog> logs;
    for (int run = 0; run < config.n_runs; ++run) {
        if (!std::filesystem::exists(layout.log(run))) {
            throw DataError("missing run log " + layout.log(run).string());
        }
        logs.push_back(io::read_run_log(layout.log(run)));
    }
    if (logs.empty()) throw DataError("no run logs to evaluate");
    for (const auto& l : logs) {
        if (l.steps.size() != logs.front().steps.size()) throw DataError("run logs differ in length");
    }
    const auto dir = layout.metrics_dir();
    io::write_rmse_csv(dir / "rmse.csv", metrics::rmse_series(logs));
    io::write_cdf_csv(dir / "cdf.csv", metrics::error_cdf(logs));
    const std::size_t J = logs.front().steps.empty() ? 0 : logs.front().steps.front().declared.size();
    for (std::size_t j = 0; j < J; ++j) {
        io::write_gospa_csv(dir / ("gospa_pa" + std::to_string(j) + ".csv"),
                            metrics::gospa_series(logs, static_cast<int>(j), config.gospa));
    }
}

void cli_full(const RunConfig& config, const Options& options) {
    cli_simulate(config, options);
    cli_run(config, options);
    cli_eval(config, options);
}

}  // namespace dmslam::pipeline
