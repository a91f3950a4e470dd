#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <iosfwd>
#include <vector>

namespace hbgrasp {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// Rigid transform in SE(3): translation plus unit quaternion.
///
/// The quaternion is renormalized by every constructor and by compose(), so
/// the unit-norm invariant holds for any value reachable through the public
/// API. Poses compose left-to-right as homogeneous matrices: compose(a, b)
/// maps a point x to a * (b * x).
class Pose6D {
public:
    Pose6D() : position_(Vec3::Zero()), orientation_(Quat::Identity()) {}
    Pose6D(const Vec3& position, const Quat& orientation);

    static Pose6D identity() { return {}; }
    static Pose6D translation(const Vec3& t) { return {t, Quat::Identity()}; }
    static Pose6D rotation(const Quat& q) { return {Vec3::Zero(), q}; }
    static Pose6D from_axis_angle(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero());
    /// px py pz qw qx qy qz
    static Pose6D from_array(const std::array<double, 7>& v);

    [[nodiscard]] std::array<double, 7> to_array() const;

    [[nodiscard]] const Vec3& position() const { return position_; }
    [[nodiscard]] const Quat& orientation() const { return orientation_; }
    [[nodiscard]] Eigen::Matrix3d rotation_matrix() const { return orientation_.toRotationMatrix(); }
    [[nodiscard]] Eigen::Matrix4d matrix() const;

    [[nodiscard]] Vec3 transform_point(const Vec3& x) const { return orientation_ * x + position_; }
    [[nodiscard]] Vec3 rotate(const Vec3& v) const { return orientation_ * v; }

private:
    Vec3 position_;
    Quat orientation_;
};

Pose6D compose(const Pose6D& a, const Pose6D& b);
Pose6D inverse(const Pose6D& p);

inline Pose6D operator*(const Pose6D& a, const Pose6D& b) { return compose(a, b); }

/// Angle of the relative rotation between two orientations, in [0, pi].
/// q and -q are treated as the same orientation.
double geodesic_angle(const Quat& a, const Quat& b);

/// Weighted SE(3) distance w_pos * |dp| + w_rot * angle.
struct SE3Metric {
    double w_pos = 1.0;   // 1/m
    double w_rot = 0.2;   // 1/rad

    void validate() const;
};

double se3_distance(const Pose6D& a, const Pose6D& b, const SE3Metric& m = {});

/// Separable kernel bandwidth: per-axis position sigma and a geodesic-angle sigma.
struct SE3Kernel {
    Vec3 sigma_pos = Vec3::Constant(0.02);
    double sigma_rot = 0.15;

    void validate() const;
    /// Product of the four 1D Gaussian normalizers; the kernel's peak value.
    [[nodiscard]] double normalizer() const;
};

double kernel_eval(const Pose6D& y, const Pose6D& center, const SE3Kernel& k);
/// log(kernel_eval), finite for arbitrarily distant poses.
double log_kernel_eval(const Pose6D& y, const Pose6D& center, const SE3Kernel& k);

/// Rotation vector (axis * angle) of q, angle in [0, pi].
Vec3 rotation_vector(const Quat& q);
Quat quat_from_rotation_vector(const Vec3& w);

/// Sign-aligned weighted quaternion average; adequate for clustered inputs.
Quat average_quaternions(const std::vector<Quat>& qs, const std::vector<double>& weights);

bool approx_equal(const Pose6D& a, const Pose6D& b, double tol);

std::ostream& operator<<(std::ostream& os, const Pose6D& p);

}  // namespace hbgrasp
