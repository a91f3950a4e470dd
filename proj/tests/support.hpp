#pragma once

#include "hbgrasp/cloud.hpp"
#include "hbgrasp/rng.hpp"
#include "hbgrasp/se3.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hbgrasp::test {

inline Vec3 random_vec(Rng& rng, double scale = 1.0) {
    return Vec3(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale));
}

inline Eigen::VectorXd random_vec_n(Rng& rng, int n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
    return v;
}

// Uniform on SO(3) (Shoemake).
inline Quat random_quat(Rng& rng) {
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
    return Quat(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
}

inline Pose6D random_pose(Rng& rng, double scale = 1.0) { return {random_vec(rng, scale), random_quat(rng)}; }

// Relative rotation angle from rotation matrices, independent of the quaternion code.
inline double matrix_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

inline double pos_error(const Pose6D& a, const Pose6D& b) { return (a.position() - b.position()).norm(); }
inline double rot_error(const Pose6D& a, const Pose6D& b) {
    return matrix_angle(a.rotation_matrix(), b.rotation_matrix());
}

constexpr double kDeg = std::numbers::pi / 180.0;

// One revolute base joint and a single one-link finger lying along +x.
inline const char* kOneFinger = R"({"name": "one", "wrist": "base", "links": [
  {"name": "base", "parent": null, "axis": [0, 0, 1], "limits": [-3, 3], "offset_pose": [0, 0, 0, 1, 0, 0, 0]},
  {"name": "tip", "parent": "base", "axis": [0, 0, 1], "limits": [-1, 1], "offset_pose": [0, 0, 0, 1, 0, 0, 0],
   "finger": 0, "mesh_box": {"half_extents": [0.02, 0.01, 0.01], "offset": [0.02, 0, 0, 1, 0, 0, 0]},
   "fingertip": {"offset_pose": [0.04, -0.01, 0, 1, 0, 0, 0], "inward_normal": [0, -1, 0]}}]})";

// Points on the plane y = -0.01 - gap below that finger, normals along +y * sign.
inline CloudPtr plane_below(double gap, double sign = 1.0) {
    std::vector<OrientedPoint> pts;
    for (int i = -20; i <= 20; ++i) {
        for (int j = -20; j <= 20; ++j) pts.push_back({Vec3(0.02 + 0.002 * i, -0.01 - gap, 0.002 * j), Vec3(0, sign, 0)});
    }
    return std::make_shared<const PointCloudModel>(std::move(pts));
}

}  // namespace hbgrasp::test
