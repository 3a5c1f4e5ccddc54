#pragma once

#include "dmslam/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

/// Floor-plan geometry, virtual anchors by mirror imaging and single-bounce
/// specular ray tracing.
namespace dmslam::scene {

struct Segment {
    Vec2 a;
    Vec2 b;
    int id = 0;
};

/// Axis-aligned surveillance region.
struct Bounds {
    double xmin = 0.0;
    double ymin = 0.0;
    double xmax = 0.0;
    double ymax = 0.0;

    [[nodiscard]] bool contains(const Vec2& p) const {
        return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
    }
    [[nodiscard]] double width() const { return xmax - xmin; }
    [[nodiscard]] double height() const { return ymax - ymin; }
    [[nodiscard]] double area() const { return width() * height(); }
    [[nodiscard]] double diagonal() const { return std::hypot(width(), height()); }
};

struct FloorPlan {
    std::vector<Segment> segments;
    Bounds bounds;
};

struct AnchorSet {
    std::vector<Vec2> pa_positions;

    [[nodiscard]] int count() const { return static_cast<int>(pa_positions.size()); }
};

/// True agent positions; entry k-1 is the position at time step k.
struct Trajectory {
    std::vector<Vec2> positions;

    [[nodiscard]] int steps() const { return static_cast<int>(positions.size()); }
};

struct PropagationPath {
    Vec2 anchor_pos;             ///< PA for the LOS path, VA for a single bounce
    Vec2 reflection_point;       ///< equals anchor_pos for the LOS path
    double delay = 0.0;          ///< seconds
    int bounce = 0;
    std::optional<int> segment_id;
    int pa_index = 0;

    [[nodiscard]] double length() const { return delay * kSpeedOfLight; }
};

struct Scenario {
    FloorPlan plan;
    AnchorSet anchors;
    Trajectory trajectory;
    double max_step = 1.0;  ///< max displacement between consecutive waypoints (m/step)
    std::string description;
};

/// Tolerance for endpoint grazing and on-line tests (m).
inline constexpr double kGeomTol = 1e-9;

/// Reflection of p across the infinite line through s.
/// Throws InvalidArgument for a degenerate segment.
Vec2 mirror_point(const Vec2& p, const Segment& s);

/// True when the open segment p→q is blocked by s. Intersections at p or q
/// themselves are ignored; touching an endpoint of s counts as blocked.
bool blocks(const Segment& s, const Vec2& p, const Vec2& q);

/// True when no segment of the plan blocks p→q.
bool line_of_sight(const Vec2& p, const Vec2& q, const FloorPlan& plan);

/// Single-bounce path agent → s → pa, or empty when the specular point falls
/// outside s or either leg is occluded.
std::optional<PropagationPath> specular_path(const Vec2& agent, const Vec2& pa,
                                             const Segment& s, const FloorPlan& plan);

/// LOS path (when visible) followed by every valid single-bounce path, in
/// segment order.
std::vector<PropagationPath> enumerate_paths(const Vec2& agent, int pa_index,
                                             const FloorPlan& plan, const AnchorSet& anchors);

/// Checks every type invariant; throws ValidationError naming the field.
void validate(const Scenario& scenario);

/// Parses a scenario document (JSON text). Throws ParseError / ValidationError.
Scenario parse_scenario(const std::string& text);

Scenario load_scenario(const std::filesystem::path& path);

}  // namespace dmslam::scene
