#include "hbgrasp/se3.hpp"

#include "hbgrasp/error.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

namespace hbgrasp {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

Quat checked_normalized(const Quat& q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw InvalidArgument("pose orientation quaternion has zero or non-finite norm");
    }
    return Quat(q.coeffs() / n);
}

}  // namespace

Pose6D::Pose6D(const Vec3& position, const Quat& orientation)
    : position_(position), orientation_(checked_normalized(orientation)) {}

Pose6D Pose6D::from_axis_angle(const Vec3& axis, double angle, const Vec3& t) {
    return {t, Quat(Eigen::AngleAxisd(angle, axis.normalized()))};
}

Pose6D Pose6D::from_array(const std::array<double, 7>& v) {
    return {Vec3(v[0], v[1], v[2]), Quat(v[3], v[4], v[5], v[6])};
}

std::array<double, 7> Pose6D::to_array() const {
    return {position_.x(), position_.y(), position_.z(),
            orientation_.w(), orientation_.x(), orientation_.y(), orientation_.z()};
}

Eigen::Matrix4d Pose6D::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = position_;
    return m;
}

Pose6D compose(const Pose6D& a, const Pose6D& b) {
    return {a.position() + a.orientation() * b.position(), a.orientation() * b.orientation()};
}

Pose6D inverse(const Pose6D& p) {
    const Quat qi = p.orientation().conjugate();
    return {-(qi * p.position()), qi};
}

double geodesic_angle(const Quat& a, const Quat& b) {
    const Quat rel = a.conjugate() * b;
    // atan2 form stays accurate near 0 and pi where acos loses precision.
    return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

void SE3Metric::validate() const {
    if (!(w_pos >= 0.0) || !(w_rot >= 0.0) || (w_pos == 0.0 && w_rot == 0.0)) {
        throw InvalidArgument("SE3Metric weights must be >= 0 and not both zero");
    }
}

double se3_distance(const Pose6D& a, const Pose6D& b, const SE3Metric& m) {
    return m.w_pos * (a.position() - b.position()).norm() +
           m.w_rot * geodesic_angle(a.orientation(), b.orientation());
}

void SE3Kernel::validate() const {
    if (!(sigma_pos.minCoeff() > 0.0) || !(sigma_rot > 0.0)) {
        throw InvalidArgument("SE3Kernel bandwidths must be > 0");
    }
}

double SE3Kernel::normalizer() const {
    return std::exp(-2.0 * kLog2Pi - std::log(sigma_pos.prod() * sigma_rot));
}

double log_kernel_eval(const Pose6D& y, const Pose6D& center, const SE3Kernel& k) {
    const Vec3 z = (y.position() - center.position()).cwiseQuotient(k.sigma_pos);
    const double a = geodesic_angle(y.orientation(), center.orientation()) / k.sigma_rot;
    return -2.0 * kLog2Pi - std::log(k.sigma_pos.prod() * k.sigma_rot) - 0.5 * (z.squaredNorm() + a * a);
}

double kernel_eval(const Pose6D& y, const Pose6D& center, const SE3Kernel& k) {
    return std::exp(log_kernel_eval(y, center, k));
}

Vec3 rotation_vector(const Quat& q_in) {
    Quat q = q_in.normalized();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const double s = q.vec().norm();
    if (s < 1e-12) return 2.0 * q.vec();
    const double angle = 2.0 * std::atan2(s, q.w());
    return q.vec() * (angle / s);
}

Quat quat_from_rotation_vector(const Vec3& w) {
    const double angle = w.norm();
    if (angle < 1e-12) return Quat(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()).normalized();
    return Quat(Eigen::AngleAxisd(angle, w / angle));
}

Quat average_quaternions(const std::vector<Quat>& qs, const std::vector<double>& weights) {
    if (qs.empty()) throw InvalidArgument("average_quaternions: empty input");
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    const Eigen::Vector4d ref = qs.front().coeffs();
    for (std::size_t i = 0; i < qs.size(); ++i) {
        Eigen::Vector4d c = qs[i].coeffs();
        if (c.dot(ref) < 0.0) c = -c;
        acc += weights.empty() ? c : weights[i] * c;
    }
    if (acc.norm() < 1e-15) return qs.front();
    return Quat(acc.normalized());
}

bool approx_equal(const Pose6D& a, const Pose6D& b, double tol) {
    if ((a.position() - b.position()).cwiseAbs().maxCoeff() > tol) return false;
    const Eigen::Vector4d ca = a.orientation().coeffs();
    Eigen::Vector4d cb = b.orientation().coeffs();
    if (ca.dot(cb) < 0.0) cb = -cb;
    return (ca - cb).cwiseAbs().maxCoeff() <= tol;
}

std::ostream& operator<<(std::ostream& os, const Pose6D& p) {
    const auto v = p.to_array();
    os << "[" << v[0] << " " << v[1] << " " << v[2] << " | " << v[3] << " " << v[4] << " " << v[5] << " "
       << v[6] << "]";
    return os;
}

}  // namespace hbgrasp
