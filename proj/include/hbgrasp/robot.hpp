#pragma once

#include "hbgrasp/se3.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hbgrasp {

struct Triangle {
    Vec3 v1, v2, v3;
    Vec3 normal;  // outward, (v2-v1)x(v3-v1) normalized
};

/// Closed convex triangle mesh expressed in its own bound frame, whose origin
/// is the centre of the polyhedron.
struct ConvexMesh {
    std::vector<Triangle> triangles;

    [[nodiscard]] double circumradius() const;
};

/// 12-triangle box centred at the origin with outward normals.
ConvexMesh make_box_mesh(const Vec3& half_extents);

/// Throws unless every face normal points away from the centroid and every
/// vertex lies on or behind every face plane.
void validate_convex_mesh(const ConvexMesh& mesh);

enum class JointType { Revolute, Fixed };

struct JointSpec {
    JointType type = JointType::Revolute;
    Vec3 axis = Vec3::UnitZ();
    double lower = -3.14159;
    double upper = 3.14159;
};

struct LinkBound {
    ConvexMesh mesh;
    Vec3 half_extents = Vec3::Zero();  // informational, for box bounds
    Pose6D offset;                     // bound frame in link frame
};

struct Fingertip {
    Pose6D offset;                     // fingertip frame in link frame
    Vec3 inward_normal = -Vec3::UnitY();  // unit, link frame
};

struct Link {
    std::string name;
    int parent = -1;
    JointSpec joint;
    Pose6D offset;  // joint frame in parent link frame at zero angle
    std::optional<LinkBound> bound;
    std::optional<Fingertip> fingertip;
    int finger = -1;    // finger index, -1 for arm and palm
    bool hand = false;  // palm and finger links
    int dof_index = -1; // position in the configuration vector, -1 for fixed joints
};

/// Joint angles in radians. Configurations built through RobotModel::make_config
/// are clamped to the joint limits and carry a flag if clamping happened.
struct JointConfig {
    Eigen::VectorXd q;
    bool clamped = false;

    JointConfig() = default;
    explicit JointConfig(Eigen::VectorXd v) : q(std::move(v)) {}

    [[nodiscard]] Eigen::Index size() const { return q.size(); }
    double operator[](Eigen::Index i) const { return q[i]; }
};

/// Kinematic tree of an arm followed by a multi-finger hand.
class RobotModel {
public:
    RobotModel() = default;
    RobotModel(std::string name, std::vector<Link> links, const std::string& wrist_link);

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] const std::vector<Link>& links() const { return links_; }
    [[nodiscard]] const Link& link(std::size_t i) const { return links_[i]; }
    [[nodiscard]] int link_index(const std::string& name) const;
    [[nodiscard]] int dof() const { return dof_; }
    [[nodiscard]] int arm_dof() const { return arm_dof_; }
    [[nodiscard]] int finger_count() const { return static_cast<int>(finger_links_.size()); }
    [[nodiscard]] const std::vector<int>& finger_dofs() const { return finger_dofs_; }
    [[nodiscard]] const std::vector<int>& finger_links(int finger) const { return finger_links_[finger]; }
    /// Link carrying the fingertip frame of a finger.
    [[nodiscard]] int fingertip_link(int finger) const { return fingertip_links_[finger]; }
    [[nodiscard]] int wrist_link() const { return wrist_; }
    /// Hand links (palm and fingers) that carry a bound.
    [[nodiscard]] const std::vector<int>& hand_bound_links() const { return hand_bound_links_; }
    [[nodiscard]] const std::vector<int>& bound_links() const { return bound_links_; }

    [[nodiscard]] const Eigen::VectorXd& lower() const { return lower_; }
    [[nodiscard]] const Eigen::VectorXd& upper() const { return upper_; }
    /// Upper bound on how far any point rigidly attached downstream of joint i
    /// can be from that joint's axis.
    [[nodiscard]] const Eigen::VectorXd& lever_arms() const { return lever_; }

    /// Clamp to limits; sets JointConfig::clamped when anything moved.
    [[nodiscard]] JointConfig make_config(const Eigen::VectorXd& q) const;
    [[nodiscard]] JointConfig zero_config() const { return make_config(Eigen::VectorXd::Zero(dof_)); }

    /// Conservative bound on workspace displacement of any robot point when
    /// moving between two configurations along the straight joint-space segment.
    [[nodiscard]] double workspace_displacement_bound(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

    /// Upper bound on the distance from the first joint origin to the wrist.
    [[nodiscard]] double reach() const { return reach_; }
    [[nodiscard]] Vec3 base_position() const;

    /// Indices of the finger joints in the configuration vector.
    [[nodiscard]] std::vector<int> finger_joint_indices() const;

private:
    std::string name_;
    std::vector<Link> links_;
    int dof_ = 0;
    int arm_dof_ = 0;
    int wrist_ = -1;
    std::vector<std::vector<int>> finger_links_;
    std::vector<int> fingertip_links_;
    std::vector<int> finger_dofs_;
    std::vector<int> hand_bound_links_;
    std::vector<int> bound_links_;
    Eigen::VectorXd lower_, upper_, lever_;
    double reach_ = 0.0;
};

struct FkResult {
    std::vector<Pose6D> links;       // world pose of every link frame
    std::vector<Pose6D> fingertips;  // world pose of every fingertip frame, by finger
};

/// World pose of every link and fingertip. Throws on a dimension mismatch.
FkResult fk_links(const RobotModel& r, const Eigen::VectorXd& q);
inline FkResult fk_links(const RobotModel& r, const JointConfig& q) { return fk_links(r, q.q); }

/// World pose of a link's bound frame.
Pose6D bound_pose(const RobotModel& r, const FkResult& fk, int link);

/// 6 x arm_dof geometric Jacobian of the wrist frame (linear rows first).
Eigen::MatrixXd wrist_jacobian(const RobotModel& r, const Eigen::VectorXd& q);

struct IkOptions {
    double damping = 1e-3;
    double pos_tol = 0.005;
    double rot_tol = 2.0 * 3.14159265358979323846 / 180.0;
    int max_iterations = 500;
    int divergence_window = 50;
    double max_step = 0.2;        // rad per iteration
    double rot_weight = 0.2;      // m/rad, scales orientation error against position
};

struct IkResult {
    JointConfig config;
    bool converged = false;
    double pos_error = 0.0;
    double rot_error = 0.0;
    int iterations = 0;
};

/// Damped-least-squares IK on the arm joints for the wrist frame, with the
/// finger joints set to finger_shape. Returns a flagged best effort when the
/// tolerance is not met; throws Unreachable when the target lies outside the
/// arm's reach or the error keeps growing.
IkResult ik_goal(const RobotModel& r, const Pose6D& target_wrist, const Eigen::VectorXd& finger_shape,
                 const JointConfig& seed, const IkOptions& opt = {});

JointConfig interpolate(const JointConfig& a, const JointConfig& b, double s);

/// Robot description document (JSON syntax); see data/robots/README.md.
RobotModel robot_from_json_text(const std::string& text);
RobotModel load_robot(const std::filesystem::path& path);
/// The built-in 12-DoF desk robot: 6-DoF arm and a 3-finger, 2-joint-per-finger hand.
RobotModel default_robot();
const std::string& default_robot_json();

}  // namespace hbgrasp
