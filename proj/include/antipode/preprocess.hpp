#pragma once

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "antipode/cloud.hpp"
#include "antipode/spatial_index.hpp"

namespace antipode {

/// One output point per occupied voxel: the centroid of its members, ordered
/// by lexicographic voxel coordinate. Attributes are averaged; normals are
/// renormalized.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
    if (!(voxel > 0.0)) throw ArgumentError("voxel size must be positive");

    struct Accum {
        Vec3 sum = Vec3::Zero();
        Vec3 normal_sum = Vec3::Zero();
        Vec3 first_normal = Vec3::UnitZ();
        double curvature_sum = 0.0;
        double confidence_sum = 0.0;
        std::size_t count = 0;
    };
    std::map<std::array<std::int64_t, 3>, Accum> cells;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        const std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                                              static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                                              static_cast<std::int64_t>(std::floor(p.z() / voxel))};
        auto& a = cells[key];
        a.sum += p;
        if (cloud.normals) {
            if (a.count == 0) a.first_normal = (*cloud.normals)[i];
            a.normal_sum += (*cloud.normals)[i];
        }
        if (cloud.curvatures) a.curvature_sum += (*cloud.curvatures)[i];
        a.confidence_sum += cloud.confidence(i);
        ++a.count;
    }

    PointCloud out;
    out.points.reserve(cells.size());
    if (cloud.normals) out.normals.emplace().reserve(cells.size());
    if (cloud.curvatures) out.curvatures.emplace().reserve(cells.size());
    if (cloud.confidences) out.confidences.emplace().reserve(cells.size());
    for (const auto& [key, a] : cells) {
        const double n = static_cast<double>(a.count);
        out.points.push_back(a.sum / n);
        if (cloud.normals) {
            const double len = a.normal_sum.norm();
            // Opposing normals can cancel; fall back to the first member's.
            out.normals->push_back(len > 1e-12 ? Vec3(a.normal_sum / len) : a.first_normal);
        }
        if (cloud.curvatures) out.curvatures->push_back(a.curvature_sum / n);
        if (cloud.confidences) out.confidences->push_back(a.confidence_sum / n);
    }
    return out;
}

namespace detail {

inline PointCloud subset(const PointCloud& cloud, const std::vector<std::size_t>& keep) {
    PointCloud out;
    out.points.reserve(keep.size());
    for (auto i : keep) out.points.push_back(cloud.points[i]);
    if (cloud.normals) {
        auto& n = out.normals.emplace();
        for (auto i : keep) n.push_back((*cloud.normals)[i]);
    }
    if (cloud.curvatures) {
        auto& c = out.curvatures.emplace();
        for (auto i : keep) c.push_back((*cloud.curvatures)[i]);
    }
    if (cloud.confidences) {
        auto& c = out.confidences.emplace();
        for (auto i : keep) c.push_back((*cloud.confidences)[i]);
    }
    return out;
}

}  // namespace detail

/// Mean distance from each point to its k nearest other points.
inline std::vector<double> mean_knn_distances(const PointCloud& cloud, const SpatialIndex& index, std::size_t k) {
    std::vector<double> mean(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto hits = index.knn(cloud.points[i], k + 1);
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto& h : hits) {
            if (h.index == i || used == k) continue;
            sum += std::sqrt(h.dist2);
            ++used;
        }
        mean[i] = sum / static_cast<double>(used);
    }
    return mean;
}

/// Drops points whose mean k-NN distance exceeds mean + std_ratio * stddev of
/// that statistic over the cloud. Survivors keep their relative order.
inline PointCloud remove_statistical_outliers(const PointCloud& cloud, std::size_t k, double std_ratio) {
    if (k < 1) throw ArgumentError("outlier k must be at least 1");
    if (!(std_ratio > 0.0)) throw ArgumentError("std_ratio must be positive");
    if (cloud.size() < k + 1) throw ArgumentError("outlier removal needs at least k+1 points");

    const SpatialIndex index(cloud);
    const auto mean = mean_knn_distances(cloud, index, k);
    double mu = 0.0;
    for (double d : mean) mu += d;
    mu /= static_cast<double>(mean.size());
    double var = 0.0;
    for (double d : mean) var += (d - mu) * (d - mu);
    const double sd = std::sqrt(var / static_cast<double>(mean.size()));
    // The relative slack keeps rounding noise from counting as spread when
    // every point has the same neighborhood.
    const double limit = mu + std_ratio * sd + 1e-12 * mu;

    std::vector<std::size_t> keep;
    keep.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (mean[i] <= limit) keep.push_back(i);
    }
    return detail::subset(cloud, keep);
}

/// Sign convention for a normal that carries no orientation cue: the
/// component of largest magnitude is made positive (lowest axis on ties).
inline Vec3 canonical_sign(const Vec3& n) {
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
        if (std::abs(n[a]) > std::abs(n[axis])) axis = a;
    }
    return n[axis] < 0.0 ? Vec3(-n) : n;
}

/// Unit vector perpendicular to `n`: normalized rejection of +X, or of +Y
/// when |n.x| > 0.9.
inline Vec3 deterministic_tangent(const Vec3& n) {
    const Vec3 ref = std::abs(n.x()) > 0.9 ? Vec3::UnitY() : Vec3::UnitX();
    return (ref - ref.dot(n) * n).normalized();
}

struct NormalDiagnostics {
    /// Points whose neighborhood covariance has rank < 2.
    std::vector<std::size_t> degenerate;
};

/// PCA over each point's k-neighborhood (the point included). The normal is
/// the smallest-eigenvalue eigenvector oriented away from the cloud centroid;
/// curvature is the surface variation l0 / (l0 + l1 + l2).
///
/// Degenerate neighborhoods: all-coincident gives +Z, collinear gives a
/// deterministic perpendicular; both report curvature 0 and are listed in
/// `diagnostics`.
inline PointCloud estimate_normals_curvatures(const PointCloud& cloud, std::size_t k,
                                              NormalDiagnostics* diagnostics = nullptr) {
    if (k < 3) throw ArgumentError("normal estimation needs k >= 3");
    if (cloud.size() < k) throw ArgumentError("cloud has fewer points than k");

    const SpatialIndex index(cloud);
    const Vec3 center = centroid(cloud);
    double extent = 0.0;
    for (const auto& p : cloud.points) extent = std::max(extent, (p - center).cwiseAbs().maxCoeff());

    PointCloud out = cloud;
    auto& normals = out.normals.emplace(cloud.size());
    auto& curvatures = out.curvatures.emplace(cloud.size());
    if (diagnostics) diagnostics->degenerate.clear();

    Eigen::SelfAdjointEigenSolver<Mat3> solver;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto hits = index.knn(cloud.points[i], k);
        Vec3 mean = Vec3::Zero();
        for (const auto& h : hits) mean += cloud.points[h.index];
        mean /= static_cast<double>(hits.size());
        Mat3 cov = Mat3::Zero();
        for (const auto& h : hits) {
            const Vec3 d = cloud.points[h.index] - mean;
            cov.noalias() += d * d.transpose();
        }
        cov /= static_cast<double>(hits.size());
        solver.compute(cov);
        const Vec3 lambda = solver.eigenvalues().cwiseMax(0.0);
        const double total = lambda.sum();

        Vec3 n;
        double curvature = 0.0;
        if (!(lambda[2] > 0.0)) {
            n = Vec3::UnitZ();
            if (diagnostics) diagnostics->degenerate.push_back(i);
            normals[i] = n;
            curvatures[i] = 0.0;
            continue;
        }
        if (lambda[1] <= 1e-10 * lambda[2]) {
            n = deterministic_tangent(solver.eigenvectors().col(2).normalized());
            if (diagnostics) diagnostics->degenerate.push_back(i);
        } else {
            n = solver.eigenvectors().col(0).normalized();
            curvature = std::clamp(lambda[0] / total, 0.0, 1.0);
        }
        const double side = n.dot(cloud.points[i] - center);
        if (std::abs(side) <= 1e-12 * std::max(extent, 1e-300)) {
            n = canonical_sign(n);
        } else if (side < 0.0) {
            n = -n;
        }
        normals[i] = n;
        curvatures[i] = curvature;
    }
    return out;
}

}  // namespace antipode
