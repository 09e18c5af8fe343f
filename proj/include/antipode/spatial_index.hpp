#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "antipode/cloud.hpp"

namespace antipode {

/// A neighbor hit: squared distance first so that pairs order by
/// (distance, index), which is the library-wide tie-break.
struct Neighbor {
    double dist2;
    std::size_t index;

    friend bool operator<(const Neighbor& a, const Neighbor& b) noexcept {
        return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    }
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Static k-d tree over a point set. The points are copied, so the index
/// stays valid independently of the source cloud's lifetime.
class SpatialIndex {
public:
    SpatialIndex() = default;

    explicit SpatialIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (!points_.empty()) {
            nodes_.reserve(2 * points_.size() / kLeafSize + 2);
            build(0, points_.size());
        }
    }

    explicit SpatialIndex(const PointCloud& cloud) : SpatialIndex(std::span<const Vec3>(cloud.points)) {}

    [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }
    [[nodiscard]] const Vec3& point(std::size_t i) const { return points_[i]; }

    /// The k nearest points sorted by ascending (distance, index).
    [[nodiscard]] std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const {
        k = std::min(k, points_.size());
        std::vector<Neighbor> heap;
        if (k == 0) return heap;
        heap.reserve(k + 1);
        knn_visit(0, q, k, heap);
        std::sort_heap(heap.begin(), heap.end());
        return heap;
    }

    /// All points within `radius` (inclusive), sorted by (distance, index).
    [[nodiscard]] std::vector<Neighbor> radius_search(const Vec3& q, double radius) const {
        std::vector<Neighbor> out;
        if (points_.empty() || radius < 0.0) return out;
        radius_visit(0, q, radius * radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

    [[nodiscard]] Neighbor nearest(const Vec3& q) const {
        const auto hits = knn(q, 1);
        if (hits.empty()) throw EmptyCloudError("nearest query on an empty index");
        return hits.front();
    }

private:
    static constexpr std::size_t kLeafSize = 12;

    struct Node {
        std::size_t begin = 0, end = 0;  // range in order_
        std::int32_t left = -1, right = -1;
        int axis = -1;  // -1 marks a leaf
        double split = 0.0;
    };

    std::int32_t build(std::size_t begin, std::size_t end) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(Node{begin, end});
        if (end - begin <= kLeafSize) return id;

        Vec3 lo = points_[order_[begin]], hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                             const double pa = points_[a][axis], pb = points_[b][axis];
                             return pa < pb || (pa == pb && a < b);
                         });
        const double split = points_[order_[mid]][axis];
        const auto left = build(begin, mid);
        const auto right = build(mid, end);
        auto& node = nodes_[id];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        return id;
    }

    void knn_visit(std::int32_t id, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t idx = order_[i];
                const Neighbor cand{squared_distance(q, points_[idx]), idx};
                if (heap.size() < k) {
                    heap.push_back(cand);
                    std::push_heap(heap.begin(), heap.end());
                } else if (cand < heap.front()) {
                    std::pop_heap(heap.begin(), heap.end());
                    heap.back() = cand;
                    std::push_heap(heap.begin(), heap.end());
                }
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const auto near = diff < 0.0 ? node.left : node.right;
        const auto far = diff < 0.0 ? node.right : node.left;
        knn_visit(near, q, k, heap);
        // Inclusive bound so equal-distance points with lower indices are not pruned.
        if (heap.size() < k || diff * diff <= heap.front().dist2) knn_visit(far, q, k, heap);
    }

    void radius_visit(std::int32_t id, const Vec3& q, double r2, std::vector<Neighbor>& out) const {
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t idx = order_[i];
                const double d2 = squared_distance(q, points_[idx]);
                if (d2 <= r2) out.push_back({d2, idx});
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const auto near = diff < 0.0 ? node.left : node.right;
        const auto far = diff < 0.0 ? node.right : node.left;
        radius_visit(near, q, r2, out);
        if (diff * diff <= r2) radius_visit(far, q, r2, out);
    }

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace antipode
