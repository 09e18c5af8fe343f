#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "antipode/candidates.hpp"
#include "antipode/mechanics.hpp"
#include "antipode/spatial_index.hpp"
#include "antipode/stability.hpp"

namespace antipode {

/// SplitMix64 stream keyed by (seed, stream id). The output sequence is fully
/// specified by the arithmetic below, so it is identical on every platform.
class CounterRng {
public:
    static constexpr std::string_view kAlgorithm = "splitmix64-boxmuller";

    CounterRng(std::uint64_t seed, std::uint64_t stream) : state_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform on (0, 1].
    double uniform_open_closed() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; both variates of a pair are used.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open_closed();
        const double u2 = uniform_open_closed();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

enum class SigmaMode {
    /// sigma is a length in cloud units.
    Absolute,
    /// sigma is a fraction of the cloud's bounding radius.
    Relative,
};

inline std::string_view to_string(SigmaMode m) { return m == SigmaMode::Absolute ? "absolute" : "relative"; }

inline SigmaMode sigma_mode_from_string(std::string_view s) {
    if (s == "absolute") return SigmaMode::Absolute;
    if (s == "relative") return SigmaMode::Relative;
    throw ArgumentError("unknown sigma mode '" + std::string(s) + "'");
}

struct PerturbationSpec {
    double sigma = 0.02;
    std::size_t trials = 100;
    std::uint64_t seed = 7;
    double threshold = 0.01;
    SigmaMode sigma_mode = SigmaMode::Absolute;

    void validate() const {
        if (!(sigma >= 0.0)) throw ArgumentError("sigma must be >= 0");
        if (trials < 1) throw ArgumentError("trials must be >= 1");
        if (!(threshold >= 0.0)) throw ArgumentError("threshold must be >= 0");
    }
};

struct SnapResult {
    Vec3 point;
    std::size_t index = 0;
};

/// Adds isotropic N(0, sigma^2) noise per axis and returns the nearest cloud
/// point to the displaced position (ties by index).
inline SnapResult perturb_and_snap(const Vec3& contact, const SpatialIndex& index, double sigma, CounterRng& rng) {
    const double dx = rng.normal(), dy = rng.normal(), dz = rng.normal();
    const Vec3 moved = contact + sigma * Vec3(dx, dy, dz);
    const auto hit = index.nearest(moved);
    return {index.point(hit.index), hit.index};
}

struct RobustnessReport {
    double probability = 0.0;
    std::vector<bool> per_trial;
    double sigma = 0.0;
    /// The noise standard deviation actually applied, in cloud units.
    double sigma_applied = 0.0;
    SigmaMode sigma_mode = SigmaMode::Absolute;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    std::string rng_algorithm{CounterRng::kAlgorithm};
    ClosureMode mode = ClosureMode::SoftPinch;
    double threshold = 0.01;
};

/// One trial: both contacts perturbed and snapped, inward normals taken from
/// the stored cloud normals at the snapped points, closure re-evaluated.
/// Trial t draws from stream t of the seed, so results do not depend on the
/// order trials run in.
inline bool robustness_trial(const GraspCandidate& candidate, const PointCloud& cloud, const SpatialIndex& index,
                             double sigma, std::uint64_t seed, std::size_t trial, double mu, double threshold,
                             ClosureMode mode, const Vec3& origin, double torque_scale) {
    CounterRng rng(seed, trial);
    const auto a = perturb_and_snap(candidate.contact_a, index, sigma, rng);
    const auto b = perturb_and_snap(candidate.contact_b, index, sigma, rng);
    if (a.index == b.index) return false;
    const auto& normals = *cloud.normals;
    const std::array<ContactFrame, 2> frames{build_contact_frame(a.point, -normals[a.index], mu),
                                             build_contact_frame(b.point, -normals[b.index], mu)};
    const GraspMap gm = build_grasp_map(frames, origin, torque_scale);
    return force_closure(gm, mu, threshold, mode).closure;
}

/// Empirical probability that the grasp keeps force closure when both contacts
/// are perturbed and snapped back onto the cloud.
inline RobustnessReport robust_force_closure(const GraspCandidate& candidate, const PointCloud& cloud,
                                             const PerturbationSpec& spec, double mu,
                                             ClosureMode mode = ClosureMode::SoftPinch) {
    spec.validate();
    if (cloud.empty()) throw EmptyCloudError("robustness evaluation on an empty cloud");
    if (!cloud.normals) throw PreconditionError("robustness evaluation needs stored normals");

    const SpatialIndex index(cloud);
    const Vec3 origin = centroid(cloud);
    const double radius = std::max(bounding_radius(cloud), 1e-12);
    const double sigma = spec.sigma_mode == SigmaMode::Relative ? spec.sigma * radius : spec.sigma;

    RobustnessReport rep;
    rep.sigma = spec.sigma;
    rep.sigma_applied = sigma;
    rep.sigma_mode = spec.sigma_mode;
    rep.trials = spec.trials;
    rep.seed = spec.seed;
    rep.mode = mode;
    rep.threshold = spec.threshold;
    rep.per_trial.reserve(spec.trials);
    std::size_t passed = 0;
    for (std::size_t t = 0; t < spec.trials; ++t) {
        const bool ok = robustness_trial(candidate, cloud, index, sigma, spec.seed, t, mu, spec.threshold, mode, origin,
                                         radius);
        rep.per_trial.push_back(ok);
        passed += ok ? 1 : 0;
    }
    rep.probability = static_cast<double>(passed) / static_cast<double>(spec.trials);
    return rep;
}

/// One benchmark row: an object and its probability per sigma; a missing
/// probability (no grasp planned) is written as "-".
struct BenchmarkRow {
    std::string object;
    std::vector<std::optional<double>> probabilities;
};

/// Objects as rows, (sigma x planner) as columns.
inline std::string benchmark_csv(std::span<const double> sigmas, std::span<const BenchmarkRow> rows,
                                 std::string_view planner = "ours") {
    std::string out = "object";
    for (double s : sigmas) {
        char buf[64];
        std::snprintf(buf, sizeof buf, ",%s@%g", std::string(planner).c_str(), s);
        out += buf;
    }
    out += '\n';
    for (const auto& row : rows) {
        out += row.object;
        for (const auto& p : row.probabilities) {
            if (p) {
                char buf[32];
                std::snprintf(buf, sizeof buf, ",%.4f", *p);
                out += buf;
            } else {
                out += ",-";
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace antipode
