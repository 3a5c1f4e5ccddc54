#include "dmslam/io.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dmslam::io {

namespace {

constexpr char kMagic[8] = {'D', 'M', 'S', 'L', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.append(bytes.data(), sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw DataError("snapshot file truncated");
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    pos += sizeof(T);
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::string format_double(double v) {
    std::array<char, 64> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void write_snapshots(const std::filesystem::path& path, const SnapshotSet& set) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.steps()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.pas()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(set.M));
    put<double>(out, set.delta_hz);
    put<std::uint64_t>(out, set.seed);
    for (const auto& per_pa : set.snapshots) {
        if (static_cast<int>(per_pa.size()) != set.pas()) throw InvalidArgument("write_snapshots: ragged PA count");
        for (const auto& s : per_pa) {
            if (s.z.size() != set.M) throw InvalidArgument("write_snapshots: snapshot length != M");
            for (Eigen::Index m = 0; m < s.z.size(); ++m) {
                put<double>(out, s.z[m].real());
                put<double>(out, s.z[m].imag());
            }
        }
    }
    write_text_atomic(path, out);
}

SnapshotSet read_snapshots(const std::filesystem::path& path) {
    const std::string in = read_file(path);
    if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError(path.string() + ": not a snapshot file");
    }
    std::size_t pos = sizeof(kMagic);
    if (take<std::uint32_t>(in, pos) != kVersion) throw DataError(path.string() + ": unsupported version");
    const auto K = take<std::uint32_t>(in, pos);
    const auto J = take<std::uint32_t>(in, pos);
    const auto M = take<std::uint32_t>(in, pos);
    SnapshotSet set;
    set.M = static_cast<int>(M);
    set.delta_hz = take<double>(in, pos);
    set.seed = take<std::uint64_t>(in, pos);
    if (in.size() - pos != std::size_t(K) * J * M * 16) throw DataError(path.string() + ": size mismatch");
    set.snapshots.resize(K);
    for (std::uint32_t k = 0; k < K; ++k) {
        for (std::uint32_t j = 0; j < J; ++j) {
            radio::Snapshot s;
            s.pa_index = static_cast<int>(j);
            s.step = static_cast<int>(k) + 1;
            s.z.resize(M);
            for (std::uint32_t m = 0; m < M; ++m) {
                const double re = take<double>(in, pos);
                const double im = take<double>(in, pos);
                s.z[m] = {re, im};
            }
            set.snapshots[k].push_back(std::move(s));
        }
    }
    return set;
}

// ---- Run logs ----

using nlohmann::json;

namespace {

json point(const Vec2& p) { return json::array({p.x(), p.y()}); }

Vec2 to_point(const json& j) {
    if (!j.is_array() || j.size() != 2) throw DataError("run log: malformed point");
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void write_run_log(const std::filesystem::path& path, const metrics::RunLog& log) {
    json steps = json::array();
    for (const auto& s : log.steps) {
        json pas = json::array();
        for (std::size_t j = 0; j < s.declared.size(); ++j) {
            json declared = json::array();
            for (const auto& f : s.declared[j]) {
                declared.push_back({{"id", f.pf_id}, {"pos", point(f.position)}, {"existence", f.existence}});
            }
            json truth = json::array();
            if (j < s.true_anchors.size()) {
                for (const auto& a : s.true_anchors[j]) truth.push_back(point(a));
            }
            pas.push_back({{"declared", declared},
                           {"truth", truth},
                           {"sigma2", j < s.sigma2.size() ? s.sigma2[j] : 0.0}});
        }
        steps.push_back({{"k", s.k}, {"true", point(s.true_agent)}, {"est", point(s.est_agent)}, {"pas", pas}});
    }
    const json doc = {{"run", log.run_index}, {"seed", log.seed}, {"steps", steps}};
    write_text_atomic(path, doc.dump() + "\n");
}

metrics::RunLog read_run_log(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    metrics::RunLog log;
    try {
        const json doc = json::parse(text);
        log.run_index = doc.at("run").get<int>();
        log.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& s : doc.at("steps")) {
            metrics::StepRecord r;
            r.k = s.at("k").get<int>();
            r.true_agent = to_point(s.at("true"));
            r.est_agent = to_point(s.at("est"));
            for (const auto& pa : s.at("pas")) {
                std::vector<metrics::LoggedFeature> declared;
                for (const auto& f : pa.at("declared")) {
                    declared.push_back({f.at("id").get<int>(), to_point(f.at("pos")), f.at("existence").get<double>()});
                }
                std::vector<Vec2> truth;
                for (const auto& a : pa.at("truth")) truth.push_back(to_point(a));
                r.declared.push_back(std::move(declared));
                r.true_anchors.push_back(std::move(truth));
                r.sigma2.push_back(pa.at("sigma2").get<double>());
            }
            log.steps.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed run log: " + e.what());
    }
    return log;
}

// ---- CSV ----

void write_rmse_csv(const std::filesystem::path& path, const std::vector<std::pair<int, double>>& rows) {
    std::string out = "k,rmse\n";
    for (const auto& [k, v] : rows) out += std::to_string(k) + "," + format_double(v) + "\n";
    write_text_atomic(path, out);
}

void write_cdf_csv(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& rows) {
    std::string out = "error,fraction\n";
    for (const auto& [e, f] : rows) out += format_double(e) + "," + format_double(f) + "\n";
    write_text_atomic(path, out);
}

void write_gospa_csv(const std::filesystem::path& path, const std::vector<metrics::GospaRow>& rows) {
    std::string out = "k,total,loc,missed,false\n";
    for (const auto& r : rows) {
        out += std::to_string(r.k) + "," + format_double(r.total) + "," + format_double(r.localization) + "," +
               format_double(r.missed) + "," + format_double(r.false_count) + "\n";
    }
    write_text_atomic(path, out);
}

}  // namespace dmslam::io
