#pragma once

#include "hbgrasp/kdtree.hpp"
#include "hbgrasp/se3.hpp"

#include <filesystem>
#include <memory>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace hbgrasp {

struct OrientedPoint {
    Vec3 position = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
};

struct Aabb {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    [[nodiscard]] bool empty() const { return (min.array() > max.array()).any(); }
    void extend(const Vec3& p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    [[nodiscard]] bool contains(const Vec3& p, double eps = 0.0) const {
        return (p.array() >= min.array() - eps).all() && (p.array() <= max.array() + eps).all();
    }
    [[nodiscard]] bool intersects(const Aabb& o) const {
        return !empty() && !o.empty() && (min.array() <= o.max.array()).all() && (o.min.array() <= max.array()).all();
    }
    [[nodiscard]] Aabb inflated(double r) const { return {min.array() - r, max.array() + r}; }
    [[nodiscard]] Vec3 center() const { return 0.5 * (min + max); }
    /// Box enclosing this box after a rigid transform.
    [[nodiscard]] Aabb transformed(const Pose6D& p) const;
};

/// Oriented point cloud with an exact KD-tree over positions.
///
/// Immutable after construction. Points are stored in world coordinates; the
/// frame is the reference pose the cloud is described against (the model
/// frame for an object model, identity for a raw scan).
class PointCloudModel {
public:
    PointCloudModel() = default;
    explicit PointCloudModel(std::vector<OrientedPoint> points, const Pose6D& frame = Pose6D::identity());

    [[nodiscard]] std::size_t size() const { return points_.size(); }
    [[nodiscard]] bool empty() const { return points_.empty(); }
    [[nodiscard]] const std::vector<OrientedPoint>& points() const { return points_; }
    [[nodiscard]] const OrientedPoint& operator[](std::size_t i) const { return points_[i]; }
    [[nodiscard]] const Pose6D& frame() const { return frame_; }
    [[nodiscard]] const Aabb& aabb() const { return aabb_; }
    [[nodiscard]] const KdTree<3>& index() const { return index_; }
    [[nodiscard]] Vec3 centroid() const;

    /// The n closest points to q, ascending. Throws on an empty cloud or n == 0.
    [[nodiscard]] std::vector<std::pair<OrientedPoint, double>> nearest(const Vec3& q, std::size_t n) const;
    [[nodiscard]] std::vector<Neighbor> nearest_indices(const Vec3& q, std::size_t n) const;

    /// New cloud with every point and the frame moved by t (index rebuilt).
    [[nodiscard]] PointCloudModel transformed(const Pose6D& t) const;

private:
    std::vector<OrientedPoint> points_;
    Pose6D frame_;
    Aabb aabb_;
    KdTree<3> index_;
};

using CloudPtr = std::shared_ptr<const PointCloudModel>;

/// An object model placed at a pose without copying or re-indexing it.
///
/// World coordinates of a model point m are pose * m. Queries against a
/// PlacedCloud are answered in the model frame, so one KD-tree serves every
/// pose hypothesis.
struct PlacedCloud {
    CloudPtr model;
    Pose6D pose;
    Aabb world_aabb;

    PlacedCloud() = default;
    PlacedCloud(CloudPtr m, const Pose6D& p);
    static PlacedCloud world(CloudPtr m) { return {std::move(m), Pose6D::identity()}; }

    /// Materialize the placed points in world coordinates.
    [[nodiscard]] PointCloudModel materialize() const;
};

/// Azimuthal view sectors about a vertical axis, used to emulate partial scans.
struct ViewMask {
    int view_count = 7;
    std::set<int> selected;

    void validate() const;
    static ViewMask all(int view_count = 7);
};

int view_sector(const Vec3& p, const Vec3& center, int view_count);

PointCloudModel apply_view_mask(const PointCloudModel& cloud, const ViewMask& mask, const Vec3& center);

/// Normals from a k-nearest-neighbour plane fit, oriented away from the centroid.
PointCloudModel estimate_normals(std::span<const Vec3> points, std::size_t k);

/// ASCII PLY with vertex properties x y z nx ny nz; CSV x,y,z,nx,ny,nz is
/// accepted when the file does not start with "ply".
PointCloudModel load_cloud(const std::filesystem::path& path);
void save_ply(const PointCloudModel& cloud, const std::filesystem::path& path);
void save_csv(const PointCloudModel& cloud, const std::filesystem::path& path);

}  // namespace hbgrasp
