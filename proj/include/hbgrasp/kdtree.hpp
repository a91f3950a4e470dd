#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace hbgrasp {

struct Neighbor {
    std::size_t index;
    double distance;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    }
};

/// Exact static KD-tree over points in R^D (Euclidean metric).
///
/// Results are sorted ascending by distance with ties broken by index, which
/// makes them identical to a linear scan sorted the same way.
template <int D>
class KdTree {
public:
    using Point = Eigen::Matrix<double, D, 1>;

    KdTree() = default;
    explicit KdTree(std::vector<Point> points, std::size_t leaf_size = 8)
        : points_(std::move(points)), order_(points_.size()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (!points_.empty()) {
            nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
            build(0, points_.size());
        }
        // Leaf scans read a contiguous copy in tree order.
        packed_.reserve(order_.size());
        for (std::size_t i : order_) packed_.push_back(points_[i]);
    }

    [[nodiscard]] std::size_t size() const { return points_.size(); }
    [[nodiscard]] bool empty() const { return points_.empty(); }
    [[nodiscard]] const Point& point(std::size_t i) const { return points_[i]; }

    [[nodiscard]] std::vector<Neighbor> knn(const Point& q, std::size_t n) const {
        std::vector<Neighbor> heap;  // max-heap on (distance, index)
        n = std::min(n, points_.size());
        if (n == 0) return heap;
        heap.reserve(n + 1);
        knn_recurse(0, q, n, heap);
        std::sort_heap(heap.begin(), heap.end());
        for (auto& h : heap) h.distance = std::sqrt(h.distance);
        return heap;
    }

    [[nodiscard]] std::vector<Neighbor> radius(const Point& q, double r) const {
        std::vector<Neighbor> out;
        if (points_.empty()) return out;
        radius_recurse(0, q, r * r, out);
        for (auto& h : out) h.distance = std::sqrt(h.distance);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Node {
        // leaf when dim < 0: covers order_[begin, end)
        int dim = -1;
        double split = 0.0;
        Point lo, hi;  // bounding box of the covered points
        std::uint32_t left = 0, right = 0;
        std::size_t begin = 0, end = 0;
    };

    std::uint32_t build(std::size_t begin, std::size_t end) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(Node{});
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        Point lo = points_[order_[begin]], hi = lo;
        for (std::size_t i = begin + 1; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        nodes_[id].lo = lo;
        nodes_[id].hi = hi;
        if (end - begin <= leaf_size_) return id;

        int dim = 0;
        (hi - lo).maxCoeff(&dim);
        if (hi[dim] - lo[dim] <= 0.0) return id;  // all duplicates: keep as leaf

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return points_[a][dim] < points_[b][dim]; });
        const double split = points_[order_[mid]][dim];
        const std::uint32_t l = build(begin, mid);
        const std::uint32_t r = build(mid, end);
        nodes_[id].dim = dim;
        nodes_[id].split = split;
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    void consider(std::size_t slot, const Point& q, std::size_t n, std::vector<Neighbor>& heap) const {
        const Neighbor cand{order_[slot], (packed_[slot] - q).squaredNorm()};
        if (heap.size() < n) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
        }
    }

    [[nodiscard]] double box_distance2(const Node& node, const Point& q) const {
        return (node.lo - q).cwiseMax(q - node.hi).cwiseMax(0.0).squaredNorm();
    }

    void knn_recurse(std::uint32_t id, const Point& q, std::size_t n, std::vector<Neighbor>& heap) const {
        const Node& node = nodes_[id];
        // <= keeps equal-distance candidates reachable for index tie-breaking
        if (heap.size() == n && box_distance2(node, q) > heap.front().distance) return;
        if (node.dim < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) consider(i, q, n, heap);
            return;
        }
        const double diff = q[node.dim] - node.split;
        knn_recurse(diff < 0.0 ? node.left : node.right, q, n, heap);
        knn_recurse(diff < 0.0 ? node.right : node.left, q, n, heap);
    }

    void radius_recurse(std::uint32_t id, const Point& q, double r2, std::vector<Neighbor>& out) const {
        const Node& node = nodes_[id];
        if (node.dim < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const double d2 = (packed_[i] - q).squaredNorm();
                if (d2 <= r2) out.push_back({order_[i], d2});
            }
            return;
        }
        const double diff = q[node.dim] - node.split;
        const std::uint32_t near = diff < 0.0 ? node.left : node.right;
        const std::uint32_t far = diff < 0.0 ? node.right : node.left;
        radius_recurse(near, q, r2, out);
        if (diff * diff <= r2) radius_recurse(far, q, r2, out);
    }

    std::vector<Point> points_;
    std::vector<std::size_t> order_;
    std::vector<Point> packed_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_ = 8;
};

}  // namespace hbgrasp
