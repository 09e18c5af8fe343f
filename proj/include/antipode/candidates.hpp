#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "antipode/cloud.hpp"
#include "antipode/preprocess.hpp"
#include "antipode/region_growing.hpp"

namespace antipode {

/// Two regions of one segmentation whose outward normals are near-antiparallel.
struct RegionPair {
    std::size_t region_a = 0;
    std::size_t region_b = 0;
    /// normalize(n_a - n_b)
    Vec3 common_normal;
    double antiparallel_angle_deg = 0.0;
    /// Distance between the region centroids along the common normal.
    double separation = 0.0;

    [[nodiscard]] RegionPair swapped() const {
        RegionPair p = *this;
        std::swap(p.region_a, p.region_b);
        p.common_normal = -common_normal;
        return p;
    }
};

/// All pairs i < j with angle(n_i, -n_j) <= max_angle_deg and separation in
/// (0, max_width], sorted by ascending angle then (i, j).
inline std::vector<RegionPair> find_antiparallel_pairs(std::span<const PlanarRegion> regions, double max_angle_deg,
                                                       double max_width) {
    std::vector<RegionPair> pairs;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        for (std::size_t j = i + 1; j < regions.size(); ++j) {
            const Vec3& na = regions[i].plane_normal;
            const Vec3& nb = regions[j].plane_normal;
            const double angle = angle_between_deg(na, -nb);
            if (angle > max_angle_deg) continue;
            const Vec3 common = (na - nb).normalized();
            const double separation = std::abs((regions[i].centroid - regions[j].centroid).dot(common));
            if (!(separation > 0.0) || separation > max_width) continue;
            pairs.push_back({i, j, common, angle, separation});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const RegionPair& a, const RegionPair& b) {
        return a.antiparallel_angle_deg < b.antiparallel_angle_deg;
    });
    return pairs;
}

/// Orthonormal basis of the plane through the origin orthogonal to `normal`.
/// The normal's sign is canonicalized first, so a pair and its swap share
/// one frame.
struct PlaneFrame {
    Vec3 normal;
    Vec3 u;
    Vec3 v;

    static PlaneFrame from_normal(const Vec3& n) {
        PlaneFrame f;
        f.normal = canonical_sign(n.normalized());
        f.u = deterministic_tangent(f.normal);
        f.v = f.normal.cross(f.u);
        return f;
    }

    /// P p with P = I - n n^T.
    [[nodiscard]] Vec3 project(const Vec3& p) const { return p - normal.dot(p) * normal; }
    [[nodiscard]] Vec2 coords(const Vec3& p) const { return {u.dot(p), v.dot(p)}; }
};

struct CommonPlaneProjection {
    PlaneFrame frame;
    std::vector<Vec2> proj_a;
    std::vector<Vec2> proj_b;
    /// Cloud indices matching proj_a / proj_b element-wise (originals kept, P is never inverted).
    std::vector<std::size_t> indices_a;
    std::vector<std::size_t> indices_b;
};

inline CommonPlaneProjection project_to_common_plane(const RegionPair& pair, std::span<const PlanarRegion> regions,
                                                     const PointCloud& cloud) {
    CommonPlaneProjection out;
    out.frame = PlaneFrame::from_normal(pair.common_normal);
    out.indices_a = regions[pair.region_a].point_indices;
    out.indices_b = regions[pair.region_b].point_indices;
    out.proj_a.reserve(out.indices_a.size());
    out.proj_b.reserve(out.indices_b.size());
    for (auto i : out.indices_a) out.proj_a.push_back(out.frame.coords(cloud.points[i]));
    for (auto i : out.indices_b) out.proj_b.push_back(out.frame.coords(cloud.points[i]));
    return out;
}

struct Box2 {
    Vec2 lo;
    Vec2 hi;

    [[nodiscard]] bool contains(const Vec2& p, double margin = 0.0) const {
        return p.x() >= lo.x() - margin && p.x() <= hi.x() + margin && p.y() >= lo.y() - margin &&
               p.y() <= hi.y() + margin;
    }
    [[nodiscard]] Vec2 center() const { return 0.5 * (lo + hi); }
    [[nodiscard]] double area() const { return (hi - lo).prod(); }

    static Box2 bounding(std::span<const Vec2> pts) {
        Box2 b{pts.front(), pts.front()};
        for (const auto& p : pts) {
            b.lo = b.lo.cwiseMin(p);
            b.hi = b.hi.cwiseMax(p);
        }
        return b;
    }
};

/// Intersection of the two sets' bounding boxes; empty when it has zero area
/// or either set has fewer than `min_points` inside it.
inline std::optional<Box2> overlap_region(std::span<const Vec2> proj_a, std::span<const Vec2> proj_b,
                                          std::size_t min_points) {
    if (proj_a.empty() || proj_b.empty()) return std::nullopt;
    const Box2 a = Box2::bounding(proj_a);
    const Box2 b = Box2::bounding(proj_b);
    const Box2 box{a.lo.cwiseMax(b.lo), a.hi.cwiseMin(b.hi)};
    if (!(box.hi.x() > box.lo.x() && box.hi.y() > box.lo.y())) return std::nullopt;
    auto inside = [&](std::span<const Vec2> pts) {
        return static_cast<std::size_t>(std::count_if(pts.begin(), pts.end(), [&](const Vec2& p) { return box.contains(p); }));
    };
    if (inside(proj_a) < min_points || inside(proj_b) < min_points) return std::nullopt;
    return box;
}

struct GraspCandidate {
    Vec3 contact_a;
    Vec3 contact_b;
    std::size_t index_a = 0;
    std::size_t index_b = 0;
    /// Inward unit normals: each points from its contact toward the opposing region.
    Vec3 normal_a;
    Vec3 normal_b;
    /// Unit vector from contact_a to contact_b.
    Vec3 grasp_axis;
    double width = 0.0;
    RegionPair source;
};

struct CandidateParams {
    std::size_t n_per_pair = 5;
    double distance_threshold = 0.005;
    double max_width = 0.085;
    double max_angle_deg = 15.0;
    std::size_t min_overlap_points = 20;
};

namespace detail {

inline double radical_inverse(std::size_t i, std::size_t base) {
    double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

/// Nearest member (by distance / confidence) to `loc` within `radius`.
inline std::optional<std::size_t> nearest_member(const Vec2& loc, std::span<const Vec2> proj,
                                                 std::span<const std::size_t> indices, const PointCloud& cloud,
                                                 double radius) {
    std::optional<std::size_t> best;
    double best_score = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    for (std::size_t k = 0; k < proj.size(); ++k) {
        const double d = (proj[k] - loc).norm();
        if (d > radius) continue;
        const double score = d / cloud.confidence(indices[k]);
        if (score < best_score || (score == best_score && indices[k] < best_index)) {
            best_score = score;
            best_index = indices[k];
            best = k;
        }
    }
    return best;
}

}  // namespace detail

/// Sampling locations inside `box`: the center, then a Halton(2,3) sequence.
inline std::vector<Vec2> overlap_samples(const Box2& box, std::size_t count) {
    std::vector<Vec2> out;
    out.reserve(count);
    if (count == 0) return out;
    out.push_back(box.center());
    for (std::size_t i = 1; out.size() < count; ++i) {
        const Vec2 t(detail::radical_inverse(i, 2), detail::radical_inverse(i, 3));
        out.push_back(box.lo + t.cwiseProduct(box.hi - box.lo));
    }
    return out;
}

/// Up to `n_per_pair` antipodal contact pairs inside the projected overlap.
/// Contacts whose axis deviates from the common normal, or from either contact
/// normal, by more than `max_angle_deg` are dropped, as are pairs wider than
/// `max_width`.
inline std::vector<GraspCandidate> make_candidates(const RegionPair& pair, std::span<const PlanarRegion> regions,
                                                   const PointCloud& cloud, const CandidateParams& params) {
    std::vector<GraspCandidate> out;
    if (params.n_per_pair == 0) return out;
    const auto proj = project_to_common_plane(pair, regions, cloud);
    const auto box = overlap_region(proj.proj_a, proj.proj_b, params.min_overlap_points);
    if (!box) return out;

    const PlanarRegion& ra = regions[pair.region_a];
    const PlanarRegion& rb = regions[pair.region_b];
    const Vec3 towards_b = rb.centroid - ra.centroid;
    const Vec3 normal_a = ra.plane_normal.dot(towards_b) >= 0.0 ? ra.plane_normal : Vec3(-ra.plane_normal);
    const Vec3 normal_b = rb.plane_normal.dot(towards_b) <= 0.0 ? rb.plane_normal : Vec3(-rb.plane_normal);
    const double cos_max = std::cos(params.max_angle_deg * std::numbers::pi / 180.0);

    std::set<std::pair<std::size_t, std::size_t>> seen;
    const std::size_t attempts = 8 * params.n_per_pair;
    for (const Vec2& loc : overlap_samples(*box, attempts)) {
        if (out.size() == params.n_per_pair) break;
        const auto ka = detail::nearest_member(loc, proj.proj_a, proj.indices_a, cloud, params.distance_threshold);
        const auto kb = detail::nearest_member(loc, proj.proj_b, proj.indices_b, cloud, params.distance_threshold);
        if (!ka || !kb) continue;
        const std::size_t ia = proj.indices_a[*ka];
        const std::size_t ib = proj.indices_b[*kb];
        if (!seen.insert({ia, ib}).second) continue;

        GraspCandidate c;
        c.index_a = ia;
        c.index_b = ib;
        c.contact_a = cloud.points[ia];
        c.contact_b = cloud.points[ib];
        const Vec3 span = c.contact_b - c.contact_a;
        c.width = span.norm();
        if (!(c.width > 0.0) || c.width > params.max_width) continue;
        c.grasp_axis = span / c.width;
        c.normal_a = normal_a;
        c.normal_b = normal_b;
        if (std::abs(c.grasp_axis.dot(pair.common_normal)) < cos_max) continue;
        if (c.grasp_axis.dot(normal_a) < cos_max || (-c.grasp_axis).dot(normal_b) < cos_max) continue;
        c.source = pair;
        out.push_back(c);
    }
    return out;
}

}  // namespace antipode
