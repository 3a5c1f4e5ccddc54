#include "dmslam/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dmslam {

using nlohmann::json;

radio::Pulse RunConfig::pulse() const {
    radio::Pulse p = radio::Pulse::flat(M, delta_hz);
    if (!spectrum.empty()) {
        if (static_cast<int>(spectrum.size()) != M) {
            throw ValidationError("signal.spectrum: length must equal M");
        }
        for (int m = 0; m < M; ++m) p.spectrum[m] = spectrum[static_cast<std::size_t>(m)];
    }
    return p;
}

double RunConfig::resolved_cell_width() const {
    return cell_width ? *cell_width : kSpeedOfLight / (double(M - 1) * delta_hz);
}

void RunConfig::validate() const {
    const auto wrap = [](const char* section, auto&& fn) {
        try {
            fn();
        } catch (const InvalidArgument& e) {
            throw ValidationError(std::string(section) + ": " + e.what());
        }
    };
    wrap("signal", [&] { pulse().validate(); });
    wrap("amplitude", [&] { amplitude.validate(); });
    if (!(sigma2 > 0.0)) throw ValidationError("amplitude.sigma2: must be positive");
    wrap("dynamics", [&] { transition.validate(); });
    wrap("birth", [&] {
        dynamics::BirthModel b = birth;
        b.cell_width = resolved_cell_width();
        b.validate();
    });
    wrap("hypers", [&] { hypers.validate(); });
    wrap("metrics", [&] { gospa.validate(); });
    if (!(init.sigma_pos >= 0.0 && init.sigma_vel >= 0.0)) throw ValidationError("init: negative std");
    if (!(init.sigma2_min > 0.0 && init.sigma2_max >= init.sigma2_min)) {
        throw ValidationError("init.sigma2_prior: need 0 < min <= max");
    }
    if (!(init.pa_gamma_min > 0.0 && init.pa_gamma_max >= init.pa_gamma_min)) {
        throw ValidationError("init.pa_gamma_prior: need 0 < min <= max");
    }
    if (n_runs < 1) throw ValidationError("runs.n_runs: must be >= 1");
    if (steps < 0) throw ValidationError("runs.steps: must be >= 0");
    if (jobs < 1) throw ValidationError("runs.jobs: must be >= 1");
}

namespace {

/// Reads optional keys of one section, reporting "section.key" on type errors.
class Section {
public:
    Section(const json& doc, std::string name) : name_(std::move(name)) {
        if (auto it = doc.find(name_); it != doc.end()) {
            if (!it->is_object()) throw ParseError("section '" + name_ + "': expected an object");
            obj_ = &*it;
        }
    }

    template <typename T>
    void get(const char* key, T& out) const {
        const json* v = find(key);
        if (!v) return;
        try {
            out = v->get<T>();
        } catch (const json::exception&) {
            throw ParseError("field '" + name_ + "." + key + "': wrong type");
        }
    }

    void get_pair(const char* key, double& lo, double& hi) const {
        const json* v = find(key);
        if (!v) return;
        if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
            throw ParseError("field '" + name_ + "." + key + "': expected [min, max]");
        }
        lo = (*v)[0].get<double>();
        hi = (*v)[1].get<double>();
    }

    [[nodiscard]] const json* find(const char* key) const {
        if (!obj_) return nullptr;
        auto it = obj_->find(key);
        return it == obj_->end() ? nullptr : &*it;
    }

    [[nodiscard]] std::string field(const char* key) const { return name_ + "." + key; }

private:
    std::string name_;
    const json* obj_ = nullptr;
};

double sqrt_checked(double var, const std::string& field) {
    if (!(var >= 0.0)) throw ValidationError("field '" + field + "': variance must be >= 0");
    return std::sqrt(var);
}

int line_of_offset(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ParseError("config: syntax error at line " + std::to_string(line_of_offset(text, e.byte)) +
                         ": " + e.what());
    }
    if (!doc.is_object()) throw ParseError("config: top level must be an object");

    RunConfig c;
    if (auto it = doc.find("scenario"); it != doc.end()) {
        if (!it->is_string()) throw ParseError("field 'scenario': expected a path string");
        std::filesystem::path p = it->get<std::string>();
        c.scenario_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (auto it = doc.find("output_dir"); it != doc.end()) {
        if (!it->is_string()) throw ParseError("field 'output_dir': expected a path string");
        c.output_dir = it->get<std::string>();
    }

    const Section sig(doc, "signal");
    sig.get("M", c.M);
    sig.get("delta_hz", c.delta_hz);
    if (const json* s = sig.find("spectrum")) {
        if (s->is_string()) {
            if (s->get<std::string>() != "flat") throw ParseError("field 'signal.spectrum': unknown spectrum name");
        } else if (s->is_array()) {
            for (const auto& e : *s) {
                if (e.is_number()) {
                    c.spectrum.emplace_back(e.get<double>(), 0.0);
                } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
                    c.spectrum.emplace_back(e[0].get<double>(), e[1].get<double>());
                } else {
                    throw ParseError("field 'signal.spectrum': entries must be numbers or [re, im]");
                }
            }
        } else {
            throw ParseError("field 'signal.spectrum': expected \"flat\" or an array");
        }
    }

    const Section amp(doc, "amplitude");
    amp.get("gamma_ref", c.amplitude.gamma_ref);
    amp.get("d_ref", c.amplitude.d_ref);
    amp.get("reflection_loss_db", c.amplitude.reflection_loss_db);
    amp.get("sigma2", c.sigma2);

    const Section dyn(doc, "dynamics");
    if (const json* v = dyn.find("sigma_qx2")) {
        if (!v->is_number()) throw ParseError("field 'dynamics.sigma_qx2': expected a number");
        c.transition.sigma_qx = sqrt_checked(v->get<double>(), dyn.field("sigma_qx2"));
    }
    if (const json* v = dyn.find("sigma_q_phi2")) {
        if (!v->is_array() || v->size() != 3) {
            throw ParseError("field 'dynamics.sigma_q_phi2': expected [var_x, var_y, var_gamma]");
        }
        for (int i = 0; i < 3; ++i) {
            if (!(*v)[static_cast<std::size_t>(i)].is_number()) {
                throw ParseError("field 'dynamics.sigma_q_phi2': expected numbers");
            }
            c.transition.sigma_q_phi[i] =
                sqrt_checked((*v)[static_cast<std::size_t>(i)].get<double>(), dyn.field("sigma_q_phi2"));
        }
    }
    dyn.get("p_s", c.transition.p_s);
    dyn.get("c_eps", c.transition.c_eps);

    const Section birth(doc, "birth");
    if (const json* v = birth.find("p_birth")) {
        if (v->is_null()) {
            c.birth.p_birth.reset();
        } else if (v->is_number()) {
            c.birth.p_birth = v->get<double>();
        } else {
            throw ParseError("field 'birth.p_birth': expected a number or null");
        }
    }
    birth.get("mu_b", c.birth.mu_b);
    if (const json* v = birth.find("cell_width")) {
        if (v->is_null()) {
            c.cell_width.reset();
        } else if (v->is_number()) {
            c.cell_width = v->get<double>();
        } else {
            throw ParseError("field 'birth.cell_width': expected a number or null");
        }
    }
    birth.get_pair("gamma_prior", c.birth.gamma_min, c.birth.gamma_max);

    const Section init(doc, "init");
    init.get("sigma_pos", c.init.sigma_pos);
    init.get("sigma_vel", c.init.sigma_vel);
    init.get_pair("sigma2_prior", c.init.sigma2_min, c.init.sigma2_max);
    init.get_pair("pa_gamma_prior", c.init.pa_gamma_min, c.init.pa_gamma_max);

    const Section hyp(doc, "hypers");
    hyp.get("T_dec", c.hypers.T_dec);
    hyp.get("T_pru", c.hypers.T_pru);
    hyp.get("P_a", c.hypers.P_a);
    hyp.get("P_f", c.hypers.P_f);
    hyp.get("P_sigma", c.hypers.P_sigma);
    hyp.get("ess_frac", c.hypers.ess_frac);
    hyp.get("agent_thin", c.hypers.agent_thin);
    hyp.get("exact_load_min_existence", c.hypers.exact_load_min_existence);
    hyp.get("exact_load_max_spread", c.hypers.exact_load_max_spread);
    hyp.get("kernel_scale", c.hypers.kernel_scale);

    const Section runs(doc, "runs");
    runs.get("n_runs", c.n_runs);
    runs.get("base_seed", c.base_seed);
    runs.get("steps", c.steps);
    runs.get("jobs", c.jobs);

    const Section met(doc, "metrics");
    met.get("gospa_c", c.gospa.c);
    met.get("gospa_p", c.gospa.p);
    met.get("visibility_gating", c.visibility_gating);

    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("config: cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.parent_path());
}

json to_json(const RunConfig& c) {
    json spectrum;
    if (c.spectrum.empty()) {
        spectrum = "flat";
    } else {
        spectrum = json::array();
        for (const auto& h : c.spectrum) spectrum.push_back({h.real(), h.imag()});
    }
    const auto& t = c.transition;
    json j;
    j["scenario"] = c.scenario_path.string();
    j["output_dir"] = c.output_dir.string();
    j["signal"] = {{"M", c.M}, {"delta_hz", c.delta_hz}, {"spectrum", spectrum}};
    j["amplitude"] = {{"gamma_ref", c.amplitude.gamma_ref},
                      {"d_ref", c.amplitude.d_ref},
                      {"reflection_loss_db", c.amplitude.reflection_loss_db},
                      {"sigma2", c.sigma2}};
    j["dynamics"] = {{"sigma_qx2", t.sigma_qx * t.sigma_qx},
                     {"sigma_q_phi2", {t.sigma_q_phi[0] * t.sigma_q_phi[0], t.sigma_q_phi[1] * t.sigma_q_phi[1],
                                       t.sigma_q_phi[2] * t.sigma_q_phi[2]}},
                     {"p_s", t.p_s},
                     {"c_eps", t.c_eps}};
    j["birth"] = {{"p_birth", c.birth.p_birth ? json(*c.birth.p_birth) : json(nullptr)},
                  {"mu_b", c.birth.mu_b},
                  {"cell_width", c.resolved_cell_width()},
                  {"gamma_prior", {c.birth.gamma_min, c.birth.gamma_max}}};
    j["init"] = {{"sigma_pos", c.init.sigma_pos},
                 {"sigma_vel", c.init.sigma_vel},
                 {"sigma2_prior", {c.init.sigma2_min, c.init.sigma2_max}},
                 {"pa_gamma_prior", {c.init.pa_gamma_min, c.init.pa_gamma_max}}};
    j["hypers"] = {{"T_dec", c.hypers.T_dec},
                   {"T_pru", c.hypers.T_pru},
                   {"P_a", c.hypers.P_a},
                   {"P_f", c.hypers.P_f},
                   {"P_sigma", c.hypers.P_sigma},
                   {"ess_frac", c.hypers.ess_frac},
                   {"agent_thin", c.hypers.agent_thin},
                   {"exact_load_min_existence", c.hypers.exact_load_min_existence},
                   {"exact_load_max_spread", c.hypers.exact_load_max_spread},
                   {"kernel_scale", c.hypers.kernel_scale}};
    j["runs"] = {{"n_runs", c.n_runs}, {"base_seed", c.base_seed}, {"steps", c.steps}, {"jobs", c.jobs}};
    j["metrics"] = {{"gospa_c", c.gospa.c}, {"gospa_p", c.gospa.p}, {"visibility_gating", c.visibility_gating}};
    return j;
}

}  // namespace dmslam
