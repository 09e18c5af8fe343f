#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "antipode/candidates.hpp"
#include "antipode/cloud.hpp"
#include "antipode/preprocess.hpp"
#include "antipode/region_growing.hpp"
#include "antipode/robustness.hpp"
#include "antipode/stability.hpp"

namespace antipode {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;
/// Prefix of environment variables that override config keys, e.g.
/// ANTIPODE_VOXEL=0.003 or ANTIPODE_MODE=strict.
inline constexpr std::string_view kEnvPrefix = "ANTIPODE_";

struct PlannerConfig {
    // preprocessing
    double voxel = 0.0025;
    std::size_t outlier_k = 12;
    double outlier_std_ratio = 3.0;
    std::size_t normal_k = 16;
    // segmentation
    RegionGrowingParams region;
    // candidates
    double max_angle_deg = 15.0;
    double max_width = 0.085;
    std::size_t n_per_pair = 5;
    std::size_t min_overlap_points = 20;
    // scoring
    ScoringConfig scoring;
    // robustness
    std::vector<double> sigmas{0.02, 0.05, 0.1};
    std::size_t trials = 100;
    std::uint64_t seed = 7;
    SigmaMode sigma_mode = SigmaMode::Absolute;
    /// Evaluate robust force closure of the best grasp at every sigma.
    bool plan_robustness = true;

    void validate() const {
        if (!(voxel >= 0.0)) throw ArgumentError("voxel must be >= 0 (0 disables downsampling)");
        if (outlier_k == 1) throw ArgumentError("outlier_k must be 0 (disabled) or >= 2");
        if (!(outlier_std_ratio > 0.0)) throw ArgumentError("outlier_std_ratio must be positive");
        if (normal_k < 3) throw ArgumentError("normal_k must be >= 3");
        region.validate();
        if (!(max_angle_deg > 0.0 && max_angle_deg < 90.0)) throw ArgumentError("max_angle_deg must be in (0, 90)");
        if (!(max_width > 0.0)) throw ArgumentError("max_width must be positive");
        if (n_per_pair < 1) throw ArgumentError("n_per_pair must be >= 1");
        if (!(scoring.mu > 0.0)) throw ArgumentError("mu must be positive");
        if (!(scoring.closure_threshold >= 0.0)) throw ArgumentError("closure_threshold must be >= 0");
        if (!(scoring.f_ex_magnitude > 0.0)) throw ArgumentError("f_ex_magnitude must be positive");
        if (!(scoring.f_normal_cap > 0.0)) throw ArgumentError("f_normal_cap must be positive");
        if (scoring.solver.max_iterations < 1) throw ArgumentError("max_iterations must be >= 1");
        if (sigmas.empty()) throw ArgumentError("sigmas must not be empty");
        for (double s : sigmas) {
            if (!(s >= 0.0)) throw ArgumentError("sigmas must be >= 0");
        }
        if (trials < 1) throw ArgumentError("trials must be >= 1");
    }

    [[nodiscard]] CandidateParams candidate_params() const {
        CandidateParams p;
        p.n_per_pair = n_per_pair;
        p.distance_threshold = region.distance_threshold;
        p.max_width = max_width;
        p.max_angle_deg = max_angle_deg;
        p.min_overlap_points = min_overlap_points;
        return p;
    }

    [[nodiscard]] PerturbationSpec perturbation(double sigma) const {
        PerturbationSpec s;
        s.sigma = sigma;
        s.trials = trials;
        s.seed = seed;
        s.threshold = scoring.closure_threshold;
        s.sigma_mode = sigma_mode;
        return s;
    }
};

namespace detail {

inline std::string fmt(double v) {
    std::string s;
    format_double(s, v);
    return s;
}

inline double to_double(std::string_view key, const std::string& v) {
    double d = 0.0;
    if (!parse_double(v, d)) throw ArgumentError("config key '" + std::string(key) + "': not a number: '" + v + "'");
    return d;
}

inline std::uint64_t to_uint(std::string_view key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw ArgumentError("config key '" + std::string(key) + "': not a non-negative integer: '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ArgumentError("config key '" + std::string(key) + "': integer out of range: '" + v + "'");
    }
}

inline bool to_bool(std::string_view key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ArgumentError("config key '" + std::string(key) + "': expected true/false: '" + v + "'");
}

inline std::vector<double> to_list(std::string_view key, const std::string& v) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) out.push_back(to_double(key, std::string(trim(item))));
    return out;
}

struct ConfigKey {
    std::string_view name;
    std::function<std::string(const PlannerConfig&)> get;
    std::function<void(PlannerConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
    using C = PlannerConfig;
    using S = const std::string&;
    auto dbl = [](std::string_view name, double C::*pick) {
        return ConfigKey{name, [pick](const C& c) { return fmt(c.*pick); },
                         [name, pick](C& c, S v) { c.*pick = to_double(name, v); }};
    };
    auto size = [](std::string_view name, std::size_t C::*pick) {
        return ConfigKey{name, [pick](const C& c) { return std::to_string(c.*pick); },
                         [name, pick](C& c, S v) { c.*pick = static_cast<std::size_t>(to_uint(name, v)); }};
    };
    static const std::vector<ConfigKey> keys{
        dbl("voxel", &C::voxel),
        size("outlier_k", &C::outlier_k),
        dbl("outlier_std_ratio", &C::outlier_std_ratio),
        size("normal_k", &C::normal_k),
        {"angle_threshold_deg", [](const C& c) { return fmt(c.region.angle_threshold_deg); },
         [](C& c, S v) { c.region.angle_threshold_deg = to_double("angle_threshold_deg", v); }},
        {"curvature_threshold", [](const C& c) { return fmt(c.region.curvature_threshold); },
         [](C& c, S v) { c.region.curvature_threshold = to_double("curvature_threshold", v); }},
        {"distance_threshold", [](const C& c) { return fmt(c.region.distance_threshold); },
         [](C& c, S v) { c.region.distance_threshold = to_double("distance_threshold", v); }},
        {"region_k", [](const C& c) { return std::to_string(c.region.k_neighbors); },
         [](C& c, S v) { c.region.k_neighbors = static_cast<std::size_t>(to_uint("region_k", v)); }},
        {"min_region_size", [](const C& c) { return std::to_string(c.region.min_region_size); },
         [](C& c, S v) { c.region.min_region_size = static_cast<std::size_t>(to_uint("min_region_size", v)); }},
        {"refit_interval", [](const C& c) { return std::to_string(c.region.refit_interval); },
         [](C& c, S v) { c.region.refit_interval = static_cast<std::size_t>(to_uint("refit_interval", v)); }},
        dbl("max_angle_deg", &C::max_angle_deg),
        dbl("max_width", &C::max_width),
        size("n_per_pair", &C::n_per_pair),
        size("min_overlap_points", &C::min_overlap_points),
        {"mu", [](const C& c) { return fmt(c.scoring.mu); },
         [](C& c, S v) { c.scoring.mu = to_double("mu", v); }},
        {"closure_threshold", [](const C& c) { return fmt(c.scoring.closure_threshold); },
         [](C& c, S v) { c.scoring.closure_threshold = to_double("closure_threshold", v); }},
        {"mode", [](const C& c) { return std::string(to_string(c.scoring.closure_mode)); },
         [](C& c, S v) { c.scoring.closure_mode = closure_mode_from_string(v); }},
        {"f_ex_magnitude", [](const C& c) { return fmt(c.scoring.f_ex_magnitude); },
         [](C& c, S v) { c.scoring.f_ex_magnitude = to_double("f_ex_magnitude", v); }},
        {"f_normal_cap", [](const C& c) { return fmt(c.scoring.f_normal_cap); },
         [](C& c, S v) { c.scoring.f_normal_cap = to_double("f_normal_cap", v); }},
        {"cost_mode", [](const C& c) { return std::string(to_string(c.scoring.cost_mode)); },
         [](C& c, S v) { c.scoring.cost_mode = cost_mode_from_string(v); }},
        {"max_iterations", [](const C& c) { return std::to_string(c.scoring.solver.max_iterations); },
         [](C& c, S v) { c.scoring.solver.max_iterations = static_cast<int>(to_uint("max_iterations", v)); }},
        {"sigmas",
         [](const C& c) {
             std::string s;
             for (std::size_t i = 0; i < c.sigmas.size(); ++i) s += (i ? "," : "") + fmt(c.sigmas[i]);
             return s;
         },
         [](C& c, S v) { c.sigmas = to_list("sigmas", v); }},
        size("trials", &C::trials),
        {"seed", [](const C& c) { return std::to_string(c.seed); }, [](C& c, S v) { c.seed = to_uint("seed", v); }},
        {"sigma_mode", [](const C& c) { return std::string(to_string(c.sigma_mode)); },
         [](C& c, S v) { c.sigma_mode = sigma_mode_from_string(v); }},
        {"plan_robustness", [](const C& c) { return std::string(c.plan_robustness ? "true" : "false"); },
         [](C& c, S v) { c.plan_robustness = to_bool("plan_robustness", v); }},
    };
    return keys;
}

inline const ConfigKey& find_key(std::string_view name) {
    for (const auto& k : config_keys()) {
        if (k.name == name) return k;
    }
    throw ArgumentError("unknown config key '" + std::string(name) + "'");
}

}  // namespace detail

/// Sets one key; throws ArgumentError on unknown keys or malformed values.
inline void set_config_value(PlannerConfig& config, std::string_view key, const std::string& value) {
    detail::find_key(key).set(config, std::string(detail::trim(value)));
}

/// Flat `key = value` lines; '#' starts a comment. Unknown keys are rejected
/// and the result is validated.
inline PlannerConfig parse_config(std::istream& in, PlannerConfig config = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
        const auto key = detail::trim(body.substr(0, eq));
        const auto value = detail::trim(body.substr(eq + 1));
        try {
            set_config_value(config, key, std::string(value));
        } catch (const ArgumentError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    config.validate();
    return config;
}

inline PlannerConfig load_config(const std::string& path, PlannerConfig config = {}) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open config file '" + path + "'");
    return parse_config(in, std::move(config));
}

/// Applies ANTIPODE_<KEY> overrides (key upper-cased). `lookup` returns the
/// variable's value or nullopt; the default reads the process environment.
inline void apply_env_overrides(PlannerConfig& config,
                                const std::function<std::optional<std::string>(const std::string&)>& lookup) {
    for (const auto& k : detail::config_keys()) {
        std::string var(kEnvPrefix);
        for (char ch : k.name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        if (auto v = lookup(var)) {
            try {
                k.set(config, std::string(detail::trim(*v)));
            } catch (const ArgumentError& e) {
                throw ArgumentError(var + ": " + e.what());
            }
        }
    }
    config.validate();
}

inline void apply_env_overrides(PlannerConfig& config) {
    apply_env_overrides(config, [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    });
}

/// Canonical text form: every key in a fixed order. parse_config round-trips it.
inline std::string config_to_text(const PlannerConfig& config) {
    std::string out;
    for (const auto& k : detail::config_keys()) {
        out += k.name;
        out += " = ";
        out += k.get(config);
        out += '\n';
    }
    return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t config_hash(const PlannerConfig& config) { return fnv1a(config_to_text(config)); }

/// Hash of the cloud's coordinates (and normals when present) in %.17g text.
inline std::uint64_t cloud_hash(const PointCloud& cloud) {
    std::uint64_t h = fnv1a("");
    std::string buf;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        buf.clear();
        for (int a = 0; a < 3; ++a) {
            detail::format_double(buf, cloud.points[i][a]);
            buf += ' ';
        }
        if (cloud.normals) {
            for (int a = 0; a < 3; ++a) {
                detail::format_double(buf, (*cloud.normals)[i][a]);
                buf += ' ';
            }
        }
        buf += '\n';
        h = fnv1a(buf, h);
    }
    return h;
}

enum class PlanStatus { Ok, SegmentationEmpty, NoCandidates };

inline std::string_view to_string(PlanStatus s) {
    switch (s) {
        case PlanStatus::Ok: return "ok";
        case PlanStatus::SegmentationEmpty: return "segmentation-empty";
        case PlanStatus::NoCandidates: return "no-candidates";
    }
    return "?";
}

struct SigmaProbability {
    double sigma = 0.0;
    double probability = 0.0;
};

struct PlanResult {
    PlanStatus status = PlanStatus::Ok;
    /// Preprocessed cloud with estimated normals and curvatures; contact
    /// indices refer to it.
    PointCloud processed;
    Segmentation segmentation;
    std::vector<RegionPair> pairs;
    std::vector<GraspCandidate> candidates;
    /// Sorted reports; the head is the best grasp. Empty unless status is ok.
    RankedGrasps ranked;
    /// Robust force closure of the best grasp per configured sigma.
    std::vector<SigmaProbability> robustness;
    std::vector<std::pair<std::string, double>> timings_ms;
    std::size_t input_points = 0;
    std::uint64_t config_hash = 0;
    std::uint64_t input_hash = 0;

    [[nodiscard]] const GraspReport* best() const { return ranked.reports.empty() ? nullptr : &ranked.reports.front(); }
};

/// Outlier removal, voxel downsampling, then normal and curvature estimation.
/// Returns an empty cloud when too few points remain to estimate normals.
inline PointCloud preprocess(const PointCloud& cloud, const PlannerConfig& config) {
    if (cloud.empty()) throw EmptyCloudError("cannot plan on an empty cloud");
    PointCloud work = cloud;
    if (config.outlier_k >= 2 && work.size() > config.outlier_k)
        work = remove_statistical_outliers(work, config.outlier_k, config.outlier_std_ratio);
    if (config.voxel > 0.0) work = voxel_downsample(work, config.voxel);
    if (work.size() < config.normal_k) return {};
    return estimate_normals_curvatures(work, config.normal_k);
}

/// Preprocess, segment, pair, sample candidates and rank them.
inline PlanResult plan(const PointCloud& cloud, const PlannerConfig& config) {
    config.validate();
    if (cloud.empty()) throw EmptyCloudError("cannot plan on an empty cloud");
    using Clock = std::chrono::steady_clock;
    PlanResult out;
    out.input_points = cloud.size();
    out.config_hash = config_hash(config);
    out.input_hash = cloud_hash(cloud);

    auto stage = [&](const char* name, auto&& fn) {
        const auto t0 = Clock::now();
        fn();
        out.timings_ms.emplace_back(name, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    };

    stage("preprocess", [&] { out.processed = preprocess(cloud, config); });
    if (out.processed.size() < config.region.k_neighbors) {
        out.status = PlanStatus::SegmentationEmpty;
        return out;
    }
    stage("segment", [&] { out.segmentation = segment(out.processed, config.region); });
    if (out.segmentation.regions.empty()) {
        out.status = PlanStatus::SegmentationEmpty;
        return out;
    }
    stage("candidates", [&] {
        out.pairs = find_antiparallel_pairs(out.segmentation.regions, config.max_angle_deg, config.max_width);
        const auto params = config.candidate_params();
        for (const auto& pair : out.pairs) {
            auto batch = make_candidates(pair, out.segmentation.regions, out.processed, params);
            out.candidates.insert(out.candidates.end(), batch.begin(), batch.end());
        }
    });
    if (out.candidates.empty()) {
        out.status = PlanStatus::NoCandidates;
        return out;
    }
    stage("rank", [&] { out.ranked = rank_candidates(out.candidates, out.processed, config.scoring); });
    if (config.plan_robustness) {
        stage("robustness", [&] {
            for (double s : config.sigmas) {
                const auto rep = robust_force_closure(out.best()->candidate, out.processed, config.perturbation(s),
                                                      config.scoring.mu, config.scoring.closure_mode);
                out.robustness.push_back({s, rep.probability});
            }
        });
    }
    return out;
}

// ---- JSON ----------------------------------------------------------------

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const nlohmann::json& j, std::string_view what) {
    if (!j.is_array() || j.size() != 3) throw ArgumentError(std::string(what) + " must be a 3-element array");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        if (!j[i].is_number()) throw ArgumentError(std::string(what) + " must contain numbers");
        v[i] = j[i].get<double>();
    }
    return v;
}

inline nlohmann::json to_json(const GraspReport& r, const ScoringConfig& scoring) {
    const auto& c = r.candidate;
    nlohmann::json forces = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.stability.optimal_f.size(); ++i) forces.push_back(r.stability.optimal_f[i]);
    nlohmann::json sv = nlohmann::json::array();
    for (int i = 0; i < 6; ++i) sv.push_back(r.closure.singular_values[i]);
    return {
        {"candidate_index", r.candidate_index},
        {"contact_a", to_json(c.contact_a)},
        {"contact_b", to_json(c.contact_b)},
        {"index_a", c.index_a},
        {"index_b", c.index_b},
        {"normal_a", to_json(c.normal_a)},
        {"normal_b", to_json(c.normal_b)},
        {"grasp_axis", to_json(c.grasp_axis)},
        {"width", c.width},
        {"region_pair", {c.source.region_a, c.source.region_b}},
        {"pair_angle_deg", c.source.antiparallel_angle_deg},
        {"closure", r.closure.closure},
        {"antipodal", r.closure.antipodal},
        {"sigma_min", r.closure.sigma_min},
        {"singular_values", sv},
        {"mode", to_string(r.closure.mode)},
        {"stability_cost", r.stability.cost},
        {"converged", r.stability.converged},
        {"iterations", r.stability.iterations},
        {"constraint_violation", r.stability.constraint_violation},
        {"kkt_residual", r.stability.kkt_residual},
        {"forces", forces},
        {"cost_mode", to_string(scoring.cost_mode)},
        {"f_normal_cap", scoring.f_normal_cap},
        {"axis_offset", r.axis_offset},
    };
}

/// Without timings the output is a pure function of (input, config).
inline nlohmann::json to_json(const PlanResult& result, const PlannerConfig& config, bool include_timings = false) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["status"] = to_string(result.status);
    if (const auto* best = result.best()) {
        j["best"] = to_json(*best, config.scoring);
        nlohmann::json rob = nlohmann::json::array();
        for (const auto& r : result.robustness) rob.push_back({{"sigma", r.sigma}, {"probability", r.probability}});
        j["best"]["robustness"] = rob;
    } else {
        j["best"] = nullptr;
    }
    nlohmann::json all = nlohmann::json::array();
    for (const auto& r : result.ranked.reports) all.push_back(to_json(r, config.scoring));
    j["all_reports"] = all;

    nlohmann::json config_json = nlohmann::json::object();
    for (const auto& k : detail::config_keys()) config_json[std::string(k.name)] = k.get(config);
    j["metadata"] = {
        {"version", kVersion},
        {"config_hash", hex64(result.config_hash)},
        {"input_hash", hex64(result.input_hash)},
        {"input_points", result.input_points},
        {"processed_points", result.processed.size()},
        {"regions", result.segmentation.regions.size()},
        {"region_pairs", result.pairs.size()},
        {"candidates", result.candidates.size()},
        {"no_closure", result.status == PlanStatus::Ok && result.ranked.no_closure},
        {"object_origin", to_json(result.ranked.object_origin)},
        {"torque_scale", result.ranked.torque_scale},
        {"rng_algorithm", CounterRng::kAlgorithm},
        {"sigma_mode", to_string(config.sigma_mode)},
        {"config", config_json},
    };
    if (include_timings) {
        nlohmann::json t = nlohmann::json::object();
        for (const auto& [name, ms] : result.timings_ms) t[name] = ms;
        j["timings_ms"] = t;
    }
    return j;
}

/// Reads the grasp to evaluate from either a plan output (its `best` entry)
/// or a bare report with contact_a / contact_b.
inline GraspCandidate grasp_from_json(const nlohmann::json& j) {
    const nlohmann::json* g = &j;
    if (j.contains("best")) {
        if (j["best"].is_null()) throw ArgumentError("plan output has no best grasp");
        g = &j["best"];
    }
    if (!g->contains("contact_a") || !g->contains("contact_b"))
        throw ArgumentError("grasp JSON needs contact_a and contact_b");
    GraspCandidate c;
    c.contact_a = vec3_from_json((*g)["contact_a"], "contact_a");
    c.contact_b = vec3_from_json((*g)["contact_b"], "contact_b");
    const Vec3 span = c.contact_b - c.contact_a;
    c.width = span.norm();
    if (!(c.width > 0.0)) throw ArgumentError("grasp contacts coincide");
    c.grasp_axis = span / c.width;
    c.normal_a = g->contains("normal_a") ? vec3_from_json((*g)["normal_a"], "normal_a") : c.grasp_axis;
    c.normal_b = g->contains("normal_b") ? vec3_from_json((*g)["normal_b"], "normal_b") : Vec3(-c.grasp_axis);
    return c;
}

inline nlohmann::json to_json(const RobustnessReport& r) {
    std::string trials;
    trials.reserve(r.per_trial.size());
    for (bool ok : r.per_trial) trials += ok ? '1' : '0';
    return {
        {"schema_version", kSchemaVersion},
        {"probability", r.probability},
        {"sigma", r.sigma},
        {"sigma_applied", r.sigma_applied},
        {"sigma_mode", to_string(r.sigma_mode)},
        {"trials", r.trials},
        {"seed", r.seed},
        {"rng_algorithm", r.rng_algorithm},
        {"mode", to_string(r.mode)},
        {"threshold", r.threshold},
        {"per_trial", trials},
    };
}

}  // namespace antipode
