#pragma once

#include "dmslam/dynamics.hpp"
#include "dmslam/inference.hpp"
#include "dmslam/metrics.hpp"
#include "dmslam/radio.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dmslam {

/// Everything needed to reproduce a Monte Carlo experiment. Defaults are the
/// values of the reference 400 MHz indoor experiment.
struct RunConfig {
    std::filesystem::path scenario_path;

    // signal
    int M = 41;
    double delta_hz = 1e7;
    /// Empty = flat unit spectrum.
    std::vector<std::complex<double>> spectrum;

    // ground truth
    radio::PathAmplitudeModel amplitude;
    double sigma2 = 1e3;

    dynamics::TransitionParams transition;
    dynamics::BirthModel birth;
    /// Unset = delay resolution c / ((M - 1) delta).
    std::optional<double> cell_width;

    inference::InitParams init;
    inference::Hypers hypers;

    int n_runs = 100;
    std::uint64_t base_seed = 1;
    int steps = 0;  ///< 0 = whole trajectory
    int jobs = 1;
    std::filesystem::path output_dir = "out";

    metrics::GospaParams gospa;
    bool visibility_gating = true;

    [[nodiscard]] radio::Pulse pulse() const;
    [[nodiscard]] double resolved_cell_width() const;
    void validate() const;
};

/// Parses a config document. Relative scenario paths resolve against base_dir.
/// Throws ParseError / ValidationError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Full config with every default resolved; parse_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& config);

}  // namespace dmslam
