#include "dmslam/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dmslam::scene {

namespace {

double cross(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

std::string fmt_point(const Vec2& p) {
    std::ostringstream os;
    os << "(" << p.x() << ", " << p.y() << ")";
    return os.str();
}

}  // namespace

Vec2 mirror_point(const Vec2& p, const Segment& s) {
    const Vec2 d = s.b - s.a;
    const double len = d.norm();
    if (!(len > 0.0)) {
        throw InvalidArgument("mirror_point: degenerate segment " + std::to_string(s.id));
    }
    const Vec2 n(-d.y() / len, d.x() / len);
    return p - 2.0 * (p - s.a).dot(n) * n;
}

bool blocks(const Segment& s, const Vec2& p, const Vec2& q) {
    const Vec2 r = q - p;
    const Vec2 e = s.b - s.a;
    const double ray_len = r.norm();
    const double seg_len = e.norm();
    if (ray_len <= kGeomTol || seg_len <= 0.0) return false;

    const double denom = cross(r, e);
    const Vec2 ap = s.a - p;
    if (std::abs(denom) <= kGeomTol * ray_len * seg_len) {
        // Parallel. Only a collinear overlap can block.
        if (std::abs(cross(ap, r)) / ray_len > kGeomTol) return false;
        const double t0 = ap.dot(r) / (ray_len * ray_len);
        const double t1 = (s.b - p).dot(r) / (ray_len * ray_len);
        const double lo = std::max(std::min(t0, t1), 0.0);
        const double hi = std::min(std::max(t0, t1), 1.0);
        const double tol = kGeomTol / ray_len;
        return hi >= lo && hi > tol && lo < 1.0 - tol;
    }
    const double t = cross(ap, e) / denom;  // along the ray
    const double u = cross(ap, r) / denom;  // along the segment
    const double t_tol = kGeomTol / ray_len;
    const double u_tol = kGeomTol / seg_len;
    if (t <= t_tol || t >= 1.0 - t_tol) return false;
    return u >= -u_tol && u <= 1.0 + u_tol;
}

bool line_of_sight(const Vec2& p, const Vec2& q, const FloorPlan& plan) {
    return std::none_of(plan.segments.begin(), plan.segments.end(),
                        [&](const Segment& s) { return blocks(s, p, q); });
}

std::optional<PropagationPath> specular_path(const Vec2& agent, const Vec2& pa,
                                             const Segment& s, const FloorPlan& plan) {
    const Vec2 va = mirror_point(pa, s);
    const Vec2 r = va - agent;
    const Vec2 e = s.b - s.a;
    const double denom = cross(r, e);
    if (std::abs(denom) <= kGeomTol * r.norm() * e.norm()) return std::nullopt;

    const Vec2 ap = s.a - agent;
    const double t = cross(ap, e) / denom;
    const double u = cross(ap, r) / denom;
    const double u_tol = kGeomTol / e.norm();
    const double t_tol = kGeomTol / r.norm();
    // Strictly inside s, and strictly between agent and VA (same side as the PA).
    if (!(u > u_tol && u < 1.0 - u_tol)) return std::nullopt;
    if (!(t > t_tol && t < 1.0 - t_tol)) return std::nullopt;

    const Vec2 rp = agent + t * r;
    if (!line_of_sight(agent, rp, plan) || !line_of_sight(rp, pa, plan)) return std::nullopt;

    PropagationPath path;
    path.anchor_pos = va;
    path.reflection_point = rp;
    path.delay = (agent - va).norm() / kSpeedOfLight;
    path.bounce = 1;
    path.segment_id = s.id;
    return path;
}

std::vector<PropagationPath> enumerate_paths(const Vec2& agent, int pa_index,
                                             const FloorPlan& plan, const AnchorSet& anchors) {
    if (pa_index < 0 || pa_index >= anchors.count()) {
        throw InvalidArgument("enumerate_paths: pa_index " + std::to_string(pa_index) +
                              " out of range");
    }
    const Vec2& pa = anchors.pa_positions[static_cast<std::size_t>(pa_index)];
    std::vector<PropagationPath> paths;

    const double los = (agent - pa).norm();
    if (los > kGeomTol && line_of_sight(agent, pa, plan)) {
        PropagationPath path;
        path.anchor_pos = pa;
        path.reflection_point = pa;
        path.delay = los / kSpeedOfLight;
        path.bounce = 0;
        path.pa_index = pa_index;
        paths.push_back(path);
    }
    for (const auto& s : plan.segments) {
        if (auto path = specular_path(agent, pa, s, plan)) {
            path->pa_index = pa_index;
            paths.push_back(*path);
        }
    }
    return paths;
}

void validate(const Scenario& sc) {
    const Bounds& b = sc.plan.bounds;
    if (!(b.width() > 0.0 && b.height() > 0.0)) {
        throw ValidationError("bounds: region must have positive area");
    }
    std::set<int> ids;
    for (std::size_t i = 0; i < sc.plan.segments.size(); ++i) {
        const auto& s = sc.plan.segments[i];
        const std::string where = "segments[" + std::to_string(i) + "]";
        if ((s.a - s.b).norm() == 0.0) throw ValidationError(where + ": endpoints coincide");
        if (!ids.insert(s.id).second) {
            throw ValidationError(where + ": duplicate segment id " + std::to_string(s.id));
        }
        if (!b.contains(s.a) || !b.contains(s.b)) {
            throw ValidationError(where + ": endpoint outside bounds");
        }
    }
    if (sc.anchors.pa_positions.empty()) throw ValidationError("pas: at least one PA required");
    for (std::size_t j = 0; j < sc.anchors.pa_positions.size(); ++j) {
        if (!b.contains(sc.anchors.pa_positions[j])) {
            throw ValidationError("pas[" + std::to_string(j) + "]: position " +
                                  fmt_point(sc.anchors.pa_positions[j]) + " outside bounds");
        }
    }
    const auto& pos = sc.trajectory.positions;
    if (pos.empty()) throw ValidationError("trajectory: at least one waypoint required");
    if (!(sc.max_step > 0.0)) throw ValidationError("max_step: must be positive");
    for (std::size_t k = 0; k < pos.size(); ++k) {
        if (!pos[k].allFinite() || !b.contains(pos[k])) {
            throw ValidationError("trajectory[" + std::to_string(k) + "]: outside bounds");
        }
        if (k > 0 && (pos[k] - pos[k - 1]).norm() > sc.max_step) {
            throw ValidationError("trajectory[" + std::to_string(k) +
                                  "]: displacement exceeds max_step");
        }
    }
}

namespace {

using nlohmann::json;

double number_at(const json& j, const std::string& field) {
    if (!j.is_number()) throw ParseError("field '" + field + "': expected a number");
    return j.get<double>();
}

Vec2 point_at(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2) {
        throw ParseError("field '" + field + "': expected [x, y]");
    }
    return {number_at(j[0], field + "[0]"), number_at(j[1], field + "[1]")};
}

const json& require(const json& doc, const char* key) {
    auto it = doc.find(key);
    if (it == doc.end()) throw ParseError(std::string("missing field '") + key + "'");
    return *it;
}

int line_of_offset(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ParseError("scenario: syntax error at line " +
                         std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
    }
    if (!doc.is_object()) throw ParseError("scenario: top level must be an object");

    Scenario sc;
    const json& bounds = require(doc, "bounds");
    if (!bounds.is_array() || bounds.size() != 4) {
        throw ParseError("field 'bounds': expected [xmin, ymin, xmax, ymax]");
    }
    sc.plan.bounds = {number_at(bounds[0], "bounds[0]"), number_at(bounds[1], "bounds[1]"),
                      number_at(bounds[2], "bounds[2]"), number_at(bounds[3], "bounds[3]")};

    const json& segs = require(doc, "segments");
    if (!segs.is_array()) throw ParseError("field 'segments': expected an array");
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const std::string f = "segments[" + std::to_string(i) + "]";
        const json& s = segs[i];
        if (!s.is_array() || (s.size() != 4 && s.size() != 5)) {
            throw ParseError("field '" + f + "': expected [ax, ay, bx, by] or [ax, ay, bx, by, id]");
        }
        Segment seg;
        seg.a = {number_at(s[0], f), number_at(s[1], f)};
        seg.b = {number_at(s[2], f), number_at(s[3], f)};
        seg.id = s.size() == 5 ? static_cast<int>(number_at(s[4], f + "[4]")) : static_cast<int>(i);
        sc.plan.segments.push_back(seg);
    }

    const json& pas = require(doc, "pas");
    if (!pas.is_array()) throw ParseError("field 'pas': expected an array");
    for (std::size_t j = 0; j < pas.size(); ++j) {
        sc.anchors.pa_positions.push_back(point_at(pas[j], "pas[" + std::to_string(j) + "]"));
    }

    const json& traj = require(doc, "trajectory");
    if (!traj.is_array()) throw ParseError("field 'trajectory': expected an array");
    for (std::size_t k = 0; k < traj.size(); ++k) {
        sc.trajectory.positions.push_back(point_at(traj[k], "trajectory[" + std::to_string(k) + "]"));
    }

    if (auto it = doc.find("max_step"); it != doc.end()) sc.max_step = number_at(*it, "max_step");
    if (auto it = doc.find("description"); it != doc.end() && it->is_string()) {
        sc.description = it->get<std::string>();
    }

    validate(sc);
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("scenario: cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace dmslam::scene
