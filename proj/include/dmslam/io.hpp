#pragma once

#include "dmslam/metrics.hpp"
#include "dmslam/radio.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

/// On-disk formats: binary snapshot files, JSON run logs, metric CSVs.
namespace dmslam::io {

/// Snapshot file layout (all little-endian):
///
///   offset  size  field
///   0       8     magic "DMSLSNAP"
///   8       4     u32 format version (1)
///   12      4     u32 K (time steps)
///   16      4     u32 J (PAs)
///   20      4     u32 M (frequency bins)
///   24      8     f64 delta (Hz)
///   32      8     u64 seed used to synthesise the file
///   40      ...   K*J*M complex values, (f64 re, f64 im), ordered k, then j, then m
struct SnapshotSet {
    int M = 0;
    double delta_hz = 0.0;
    std::uint64_t seed = 0;
    /// snapshots[k][j]
    std::vector<std::vector<radio::Snapshot>> snapshots;

    [[nodiscard]] int steps() const { return static_cast<int>(snapshots.size()); }
    [[nodiscard]] int pas() const { return snapshots.empty() ? 0 : static_cast<int>(snapshots.front().size()); }
};

void write_snapshots(const std::filesystem::path& path, const SnapshotSet& set);
/// Throws DataError on a malformed or truncated file.
SnapshotSet read_snapshots(const std::filesystem::path& path);

void write_run_log(const std::filesystem::path& path, const metrics::RunLog& log);
metrics::RunLog read_run_log(const std::filesystem::path& path);

void write_rmse_csv(const std::filesystem::path& path, const std::vector<std::pair<int, double>>& rows);
void write_cdf_csv(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& rows);
void write_gospa_csv(const std::filesystem::path& path, const std::vector<metrics::GospaRow>& rows);

/// Writes to a temporary sibling and renames, so readers never see partial files.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace dmslam::io
