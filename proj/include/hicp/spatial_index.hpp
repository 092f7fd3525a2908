#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "hicp/mesh.hpp"
#include "hicp/se3.hpp"

namespace hicp {

struct Neighbor {
    std::size_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
};

/// Static kd-tree answering exact nearest-neighbour queries.
///
/// Equal distances resolve to the lowest point index, so answers match a
/// brute-force scan bit for bit.
class SpatialIndex {
public:
    SpatialIndex() = default;

    explicit SpatialIndex(std::vector<Vec3> points, std::size_t leaf_size = 8)
        : points_(std::move(points)), order_(points_.size()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (!points_.empty()) {
            nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
            build(0, points_.size());
        }
        sorted_.reserve(points_.size());
        for (std::size_t idx : order_) sorted_.push_back(points_[idx]);
    }

    /// Index over an oriented cloud; the normals ride along for association.
    explicit SpatialIndex(const OrientedPointCloud& cloud, std::size_t leaf_size = 8)
        : SpatialIndex(cloud.points, leaf_size) {
        normals_ = cloud.normals;
    }

    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    const std::vector<Vec3>& points() const noexcept { return points_; }
    const std::vector<Vec3>& normals() const noexcept { return normals_; }
    bool has_normals() const noexcept { return !normals_.empty(); }

    Neighbor nearest(const Vec3& query) const {
        Neighbor best;
        if (nodes_.empty()) return best;
        double offset[3] = {0.0, 0.0, 0.0};
        search(0, query, best, offset, 0.0);
        return best;
    }

private:
    struct Node {
        std::size_t begin = 0, end = 0;  // range in order_
        std::int32_t left = -1, right = -1;
        int axis = -1;                   // -1 for leaves
        double split = 0.0;
    };

    std::int32_t build(std::size_t begin, std::size_t end) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= leaf_size_) return id;

        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        if (!(hi[axis] > lo[axis])) return id;  // all points coincide

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        const double split = points_[order_[mid]][axis];
        const std::int32_t left = build(begin, mid);
        const std::int32_t right = build(mid, end);
        Node& n = nodes_[id];
        n.axis = axis;
        n.split = split;
        n.left = left;
        n.right = right;
        return id;
    }

    // `cell_d2` is a lower bound on the squared distance from q to the node's
    // cell, built from the per-axis offsets to the splitting planes crossed so
    // far. The bound is shrunk by a relative margin so rounding never prunes a
    // cell holding an exact tie.
    void search(std::int32_t id, const Vec3& q, Neighbor& best, double* offset, double cell_d2) const {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const double d2 = (sorted_[i] - q).squaredNorm();
                if (d2 < best.squared_distance || (d2 == best.squared_distance && order_[i] < best.index))
                    best = {order_[i], d2};
            }
            return;
        }
        // Left holds coordinates <= split, right holds coordinates >= split.
        const double diff = q[n.axis] - n.split;
        const std::int32_t near = diff < 0.0 ? n.left : n.right;
        const std::int32_t far = diff < 0.0 ? n.right : n.left;
        search(near, q, best, offset, cell_d2);
        const double saved = offset[n.axis];
        const double far_d2 = cell_d2 - saved * saved + diff * diff;
        if (far_d2 * (1.0 - 1e-12) <= best.squared_distance) {
            offset[n.axis] = diff;
            search(far, q, best, offset, far_d2);
            offset[n.axis] = saved;
        }
    }

    std::vector<Vec3> points_;
    std::vector<Vec3> normals_;
    std::vector<std::size_t> order_;
    std::vector<Vec3> sorted_;  // points_ in tree order
    std::vector<Node> nodes_;
    std::size_t leaf_size_ = 8;
};

}  // namespace hicp
