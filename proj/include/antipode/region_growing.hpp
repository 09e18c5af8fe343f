#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <span>
#include <vector>

#include "antipode/cloud.hpp"
#include "antipode/preprocess.hpp"
#include "antipode/spatial_index.hpp"

namespace antipode {

struct RegionGrowingParams {
    double angle_threshold_deg = 15.0;
    double curvature_threshold = 0.05;
    /// Tolerance on the distance from a candidate to the region's running plane.
    double distance_threshold = 0.005;
    std::size_t k_neighbors = 16;
    std::size_t min_region_size = 20;
    /// Accepted points between refits of the running plane.
    std::size_t refit_interval = 32;

    void validate() const {
        if (!(angle_threshold_deg > 0.0 && angle_threshold_deg < 90.0))
            throw ArgumentError("angle_threshold_deg must be in (0, 90)");
        if (!(curvature_threshold >= 0.0)) throw ArgumentError("curvature_threshold must be >= 0");
        if (!(distance_threshold >= 0.0)) throw ArgumentError("distance_threshold must be >= 0");
        if (k_neighbors < 3) throw ArgumentError("k_neighbors must be >= 3");
        if (min_region_size < 3) throw ArgumentError("min_region_size must be >= 3");
        if (refit_interval < 1) throw ArgumentError("refit_interval must be >= 1");
    }
};

struct PlaneFit {
    Vec3 normal;
    double offset = 0.0;  // plane is normal . x = offset
    double rms = 0.0;
    Vec3 centroid;
    /// In-plane principal directions, largest spread first.
    Vec3 major_axis;
    Vec3 minor_axis;
};

/// Total least-squares plane. The normal's largest-magnitude component is
/// positive. Throws DegenerateFitError for fewer than 3 points or a
/// rank-deficient spread (collinear or coincident).
inline PlaneFit fit_plane_lsq(std::span<const Vec3> points) {
    if (points.size() < 3) throw DegenerateFitError("plane fit needs at least 3 points");
    PlaneFit fit;
    fit.centroid = centroid(points);
    Mat3 cov = Mat3::Zero();
    for (const auto& p : points) {
        const Vec3 d = p - fit.centroid;
        cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(points.size());
    const Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    const Vec3 lambda = solver.eigenvalues().cwiseMax(0.0);
    if (!(lambda[2] > 0.0) || lambda[1] <= 1e-10 * lambda[2]) {
        throw DegenerateFitError("points are collinear or coincident");
    }
    fit.normal = canonical_sign(solver.eigenvectors().col(0).normalized());
    fit.major_axis = solver.eigenvectors().col(2).normalized();
    fit.minor_axis = fit.normal.cross(fit.major_axis);
    fit.offset = fit.normal.dot(fit.centroid);
    double sq = 0.0;
    for (const auto& p : points) {
        const double d = fit.normal.dot(p) - fit.offset;
        sq += d * d;
    }
    fit.rms = std::sqrt(sq / static_cast<double>(points.size()));
    return fit;
}

inline double angle_between_deg(const Vec3& a, const Vec3& b) {
    const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

struct PlanarRegion {
    /// Ascending indices into the segmented cloud.
    std::vector<std::size_t> point_indices;
    /// Unit normal, oriented to agree with the members' stored normals.
    Vec3 plane_normal;
    double plane_offset = 0.0;
    Vec3 centroid;
    double rms_residual = 0.0;
    /// Half-lengths of the member spread along the two in-plane principal axes.
    Vec2 extent = Vec2::Zero();
    std::size_t seed_index = 0;
    Vec3 seed_normal;

    [[nodiscard]] std::size_t size() const noexcept { return point_indices.size(); }
};

struct Segmentation {
    /// Sorted by descending size, ties by lowest member index.
    std::vector<PlanarRegion> regions;
    /// Points not in any surviving region, ascending.
    std::vector<std::size_t> residue;

    /// Region id per point, -1 for residue.
    [[nodiscard]] std::vector<int> labels(std::size_t cloud_size) const {
        std::vector<int> out(cloud_size, -1);
        for (std::size_t r = 0; r < regions.size(); ++r) {
            for (auto i : regions[r].point_indices) out[i] = static_cast<int>(r);
        }
        return out;
    }
};

namespace detail {

/// Running total-least-squares plane, accumulated relative to an anchor point
/// to limit cancellation.
class RunningPlane {
public:
    RunningPlane(const Vec3& anchor, const Vec3& normal) : anchor_(anchor), normal_(normal), reference_(normal) {
        offset_ = normal_.dot(anchor_);
    }

    void add(const Vec3& p) {
        const Vec3 d = p - anchor_;
        sum_ += d;
        outer_.noalias() += d * d.transpose();
        ++count_;
    }

    void refit() {
        if (count_ < 3) return;
        const double n = static_cast<double>(count_);
        const Vec3 mean = sum_ / n;
        const Mat3 cov = outer_ / n - mean * mean.transpose();
        const Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
        const Vec3 lambda = solver.eigenvalues();
        if (!(lambda[2] > 0.0) || lambda[1] <= 1e-10 * lambda[2]) return;
        Vec3 nrm = solver.eigenvectors().col(0).normalized();
        if (nrm.dot(reference_) < 0.0) nrm = -nrm;
        normal_ = nrm;
        offset_ = normal_.dot(anchor_ + mean);
    }

    [[nodiscard]] double distance(const Vec3& p) const { return std::abs(normal_.dot(p) - offset_); }

private:
    Vec3 anchor_;
    Vec3 normal_;
    Vec3 reference_;
    double offset_ = 0.0;
    Vec3 sum_ = Vec3::Zero();
    Mat3 outer_ = Mat3::Zero();
    std::size_t count_ = 0;
};

}  // namespace detail

/// Soft region growing. Seeds are taken in ascending (curvature, index) order
/// among the still-available points. A neighbor joins the growing region when
/// its normal is within the angle threshold of the seed normal and it lies
/// within the distance threshold of the region's running plane; joined points
/// below the curvature threshold keep the growth going. Rejected neighbors stay
/// available for later regions. Regions below `min_region_size`, and regions
/// whose members admit no plane fit, go to the residue.
inline Segmentation segment(const PointCloud& cloud, const RegionGrowingParams& params) {
    params.validate();
    if (!cloud.normals || !cloud.curvatures) throw PreconditionError("segmentation needs normals and curvatures");
    if (cloud.empty()) throw PreconditionError("segmentation needs a non-empty cloud");

    const auto& normals = *cloud.normals;
    const auto& curvature = *cloud.curvatures;
    const std::size_t n = cloud.size();
    const SpatialIndex index(cloud);
    const double cos_threshold = std::cos(params.angle_threshold_deg * std::numbers::pi / 180.0);

    std::vector<std::size_t> seed_order(n);
    for (std::size_t i = 0; i < n; ++i) seed_order[i] = i;
    std::stable_sort(seed_order.begin(), seed_order.end(),
                     [&](std::size_t a, std::size_t b) { return curvature[a] < curvature[b]; });

    std::vector<char> available(n, 1);
    Segmentation result;
    std::vector<std::size_t> members;
    std::deque<std::size_t> growth;

    for (const std::size_t seed : seed_order) {
        if (!available[seed]) continue;
        available[seed] = 0;
        const Vec3 seed_normal = normals[seed];
        detail::RunningPlane plane(cloud.points[seed], seed_normal);
        plane.add(cloud.points[seed]);
        members.assign(1, seed);
        growth.assign(1, seed);
        std::size_t since_refit = 0;

        while (!growth.empty()) {
            const std::size_t current = growth.front();
            growth.pop_front();
            for (const auto& hit : index.knn(cloud.points[current], params.k_neighbors)) {
                const std::size_t j = hit.index;
                if (!available[j]) continue;
                if (normals[j].dot(seed_normal) <= cos_threshold) continue;
                if (plane.distance(cloud.points[j]) >= params.distance_threshold) continue;
                available[j] = 0;
                members.push_back(j);
                plane.add(cloud.points[j]);
                if (++since_refit == params.refit_interval) {
                    plane.refit();
                    since_refit = 0;
                }
                if (curvature[j] < params.curvature_threshold) growth.push_back(j);
            }
        }

        std::sort(members.begin(), members.end());
        if (members.size() < params.min_region_size) {
            result.residue.insert(result.residue.end(), members.begin(), members.end());
            continue;
        }
        std::vector<Vec3> pts;
        pts.reserve(members.size());
        for (auto i : members) pts.push_back(cloud.points[i]);
        PlaneFit fit;
        try {
            fit = fit_plane_lsq(pts);
        } catch (const DegenerateFitError&) {
            result.residue.insert(result.residue.end(), members.begin(), members.end());
            continue;
        }
        PlanarRegion region;
        region.point_indices = members;
        region.seed_index = seed;
        region.seed_normal = seed_normal;
        region.centroid = fit.centroid;
        region.rms_residual = fit.rms;
        Vec3 normal_sum = Vec3::Zero();
        for (auto i : members) normal_sum += normals[i];
        region.plane_normal = fit.normal.dot(normal_sum) < 0.0 ? Vec3(-fit.normal) : fit.normal;
        region.plane_offset = region.plane_normal.dot(fit.centroid);
        double lo1 = 0.0, hi1 = 0.0, lo2 = 0.0, hi2 = 0.0;
        for (const auto& p : pts) {
            const double u = fit.major_axis.dot(p - fit.centroid);
            const double v = fit.minor_axis.dot(p - fit.centroid);
            lo1 = std::min(lo1, u);
            hi1 = std::max(hi1, u);
            lo2 = std::min(lo2, v);
            hi2 = std::max(hi2, v);
        }
        region.extent = Vec2(0.5 * (hi1 - lo1), 0.5 * (hi2 - lo2));
        result.regions.push_back(std::move(region));
    }

    std::stable_sort(result.regions.begin(), result.regions.end(), [](const PlanarRegion& a, const PlanarRegion& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a.point_indices.front() < b.point_indices.front();
    });
    std::sort(result.residue.begin(), result.residue.end());
    return result;
}

}  // namespace antipode
