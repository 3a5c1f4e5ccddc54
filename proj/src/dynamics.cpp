#include "dmslam/dynamics.hpp"

#include <cmath>

namespace dmslam::dynamics {

void TransitionParams::validate() const {
    if (!(p_s > 0.0 && p_s <= 1.0)) throw InvalidArgument("TransitionParams: p_s must be in (0, 1]");
    if (!(sigma_qx >= 0.0) || !(sigma_q_phi.array() >= 0.0).all()) {
        throw InvalidArgument("TransitionParams: standard deviations must be >= 0");
    }
    if (!(c_eps > 0.0)) throw InvalidArgument("TransitionParams: c_eps must be positive");
}

void BirthModel::validate() const {
    if (p_birth && !(*p_birth > 0.0 && *p_birth < 1.0)) {
        throw InvalidArgument("BirthModel: p_birth must be in (0, 1)");
    }
    if (!(cell_width > 0.0)) throw InvalidArgument("BirthModel: cell_width must be positive");
    if (!(mu_b >= 0.0)) throw InvalidArgument("BirthModel: mu_b must be >= 0");
    if (!(gamma_min > 0.0 && gamma_max >= gamma_min)) {
        throw InvalidArgument("BirthModel: need 0 < gamma_min <= gamma_max");
    }
}

int birth_cell(const Vec2& p, const Vec2& agent, const BirthModel& model) {
    return static_cast<int>(std::floor((p - agent).norm() / model.cell_width)) + 1;
}

namespace {

double radical_inverse(unsigned i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

}  // namespace

double cell_area_fraction(int m, const Vec2& agent, const BirthModel& model) {
    const auto& b = model.bounds;
    if (!(b.area() > 0.0)) throw InvalidArgument("cell_area_fraction: bounds have no area");
    constexpr unsigned kPoints = 1u << 14;
    unsigned hits = 0;
    for (unsigned i = 1; i <= kPoints; ++i) {
        const Vec2 p(b.xmin + b.width() * radical_inverse(i, 2),
                     b.ymin + b.height() * radical_inverse(i, 3));
        if (birth_cell(p, agent, model) == m) ++hits;
    }
    return double(hits) / double(kPoints);
}

double birth_probability(int m, const Vec2& agent, const BirthModel& model) {
    if (model.p_birth) return *model.p_birth;
    const double mu = model.mu_b * cell_area_fraction(m, agent, model);
    return birth_probability_from_mean(mu);
}

}  // namespace dmslam::dynamics
