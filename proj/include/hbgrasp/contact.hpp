#pragma once

#include "hbgrasp/cloud.hpp"
#include "hbgrasp/robot.hpp"

#include <limits>
#include <vector>

namespace hbgrasp {

struct ClearanceOptions {
    std::size_t n_nearest = 8;
    /// Use the true face-plane offset n.v1 instead of |v1|.
    bool exact_plane_offset = false;
    bool fast_reject = true;
    /// Sensing range; pairs farther apart than this may be skipped by the fast reject.
    double d_max = 0.05;

    void validate() const;
};

struct ClearanceResult {
    /// Triangle-averaged depth of the nearest points; negative when they lie outside.
    double d_signed = -std::numeric_limits<double>::infinity();
    /// |d_signed| when negative, 0 when touching or inside.
    double d_obs = std::numeric_limits<double>::infinity();
    std::vector<Vec3> nearest_points;  // bound frame
    int triangle_index = -1;
    bool rejected = false;  // skipped by the bounding-box test
};

/// Face planes of a convex bound with the offsets used by the clearance
/// formula, plus the bound-frame box outside which a point set cannot come
/// within d_max.
class PreparedBound {
public:
    PreparedBound() = default;
    PreparedBound(const ConvexMesh& mesh, const ClearanceOptions& opt);

    [[nodiscard]] const ConvexMesh& mesh() const { return mesh_; }
    [[nodiscard]] const std::vector<double>& offsets() const { return offsets_; }
    [[nodiscard]] const Aabb& reach_box() const { return reach_box_; }

private:
    ConvexMesh mesh_;
    std::vector<double> offsets_;
    Aabb reach_box_;
};

/// Clearance between a convex bound at bound_pose and a placed cloud.
ClearanceResult link_clearance(const PreparedBound& bound, const Pose6D& bound_pose, const PlacedCloud& cloud,
                               const ClearanceOptions& opt);
ClearanceResult link_clearance(const ConvexMesh& mesh, const Pose6D& bound_pose, const PointCloudModel& cloud,
                               const ClearanceOptions& opt = {});

/// Prepared bounds for every bound-carrying link of a robot.
class RobotGeometry {
public:
    RobotGeometry(const RobotModel& r, const ClearanceOptions& opt);

    [[nodiscard]] const RobotModel& robot() const { return robot_; }
    [[nodiscard]] const ClearanceOptions& options() const { return opt_; }
    [[nodiscard]] const PreparedBound& bound(int link) const { return bounds_[static_cast<std::size_t>(link)]; }

    /// Clearance of one link at a precomputed FK.
    [[nodiscard]] ClearanceResult clearance(const FkResult& fk, int link, const PlacedCloud& cloud) const;

private:
    RobotModel robot_;
    ClearanceOptions opt_;
    std::vector<PreparedBound> bounds_;  // indexed by link, empty for links without a bound
};

/// True iff some link's d_signed exceeds tol.
bool config_in_collision(const RobotGeometry& g, const Eigen::VectorXd& q, const PlacedCloud& cloud, double tol = 0.002);
bool config_in_collision(const RobotModel& r, const JointConfig& q, const PointCloudModel& cloud, double tol = 0.002,
                         const ClearanceOptions& opt = {});

}  // namespace hbgrasp
