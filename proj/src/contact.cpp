#include "hbgrasp/contact.hpp"

#include "hbgrasp/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace hbgrasp {

void ClearanceOptions::validate() const {
    if (n_nearest == 0) throw InvalidArgument("n_nearest must be >= 1");
    if (!(d_max > 0.0)) throw InvalidArgument("d_max must be > 0");
}

PreparedBound::PreparedBound(const ConvexMesh& mesh, const ClearanceOptions& opt) : mesh_(mesh) {
    offsets_.reserve(mesh_.triangles.size());
    for (const auto& t : mesh_.triangles) offsets_.push_back(opt.exact_plane_offset ? t.normal.dot(t.v1) : t.v1.norm());

    // Planes with the same normal collapse to the tightest one.
    std::vector<std::pair<Vec3, double>> planes;
    for (std::size_t i = 0; i < mesh_.triangles.size(); ++i) {
        const Vec3& n = mesh_.triangles[i].normal;
        const double c = offsets_[i] + opt.d_max;
        auto it = std::find_if(planes.begin(), planes.end(), [&](const auto& p) { return (p.first - n).norm() < 1e-9; });
        if (it == planes.end()) {
            planes.emplace_back(n, c);
        } else {
            it->second = std::min(it->second, c);
        }
    }
    // Vertices of {a : n_i.a <= c_i} from all plane triples.
    for (std::size_t i = 0; i < planes.size(); ++i) {
        for (std::size_t j = i + 1; j < planes.size(); ++j) {
            for (std::size_t k = j + 1; k < planes.size(); ++k) {
                Eigen::Matrix3d m;
                m.row(0) = planes[i].first.transpose();
                m.row(1) = planes[j].first.transpose();
                m.row(2) = planes[k].first.transpose();
                const Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
                if (!lu.isInvertible()) continue;
                const Vec3 v = lu.solve(Vec3(planes[i].second, planes[j].second, planes[k].second));
                const bool inside = std::all_of(planes.begin(), planes.end(),
                                                [&](const auto& p) { return p.first.dot(v) <= p.second + 1e-9; });
                if (inside) reach_box_.extend(v);
            }
        }
    }
    if (reach_box_.empty()) throw InvalidArgument("bound mesh does not enclose a volume");
}

namespace {

ClearanceResult clearance_in_model_frame(const PreparedBound& bound, const Pose6D& bound_in_model,
                                         const PointCloudModel& model, const ClearanceOptions& opt) {
    if (model.empty()) throw InvalidArgument("link_clearance: empty cloud");
    ClearanceResult res;
    if (opt.fast_reject && !bound.reach_box().transformed(bound_in_model).intersects(model.aabb())) {
        res.rejected = true;
        return res;
    }
    const Pose6D to_bound = inverse(bound_in_model);
    const auto nn = model.index().knn(bound_in_model.position(), opt.n_nearest);
    Vec3 mean = Vec3::Zero();
    res.nearest_points.reserve(nn.size());
    for (const auto& n : nn) {
        res.nearest_points.push_back(to_bound.transform_point(model[n.index].position));
        mean += res.nearest_points.back();
    }
    mean /= static_cast<double>(nn.size());
    // The mean over A of (c_i - n_i.a) equals c_i - n_i.mean(A).
    const auto& tris = bound.mesh().triangles;
    for (std::size_t i = 0; i < tris.size(); ++i) {
        const double d = bound.offsets()[i] - tris[i].normal.dot(mean);
        if (res.triangle_index < 0 || d < res.d_signed) {
            res.d_signed = d;
            res.triangle_index = static_cast<int>(i);
        }
    }
    res.d_obs = res.d_signed < 0.0 ? -res.d_signed : 0.0;
    return res;
}

}  // namespace

ClearanceResult link_clearance(const PreparedBound& bound, const Pose6D& bound_pose, const PlacedCloud& cloud,
                               const ClearanceOptions& opt) {
    if (!cloud.model) throw InvalidArgument("link_clearance: no cloud");
    return clearance_in_model_frame(bound, compose(inverse(cloud.pose), bound_pose), *cloud.model, opt);
}

ClearanceResult link_clearance(const ConvexMesh& mesh, const Pose6D& bound_pose, const PointCloudModel& cloud,
                               const ClearanceOptions& opt) {
    opt.validate();
    validate_convex_mesh(mesh);
    return clearance_in_model_frame(PreparedBound(mesh, opt), bound_pose, cloud, opt);
}

RobotGeometry::RobotGeometry(const RobotModel& r, const ClearanceOptions& opt) : robot_(r), opt_(opt) {
    opt_.validate();
    bounds_.resize(robot_.links().size());
    for (int l : robot_.bound_links()) bounds_[static_cast<std::size_t>(l)] = PreparedBound(robot_.link(l).bound->mesh, opt_);
}

ClearanceResult RobotGeometry::clearance(const FkResult& fk, int link, const PlacedCloud& cloud) const {
    return link_clearance(bound(link), bound_pose(robot_, fk, link), cloud, opt_);
}

bool config_in_collision(const RobotGeometry& g, const Eigen::VectorXd& q, const PlacedCloud& cloud, double tol) {
    const FkResult fk = fk_links(g.robot(), q);
    for (int l : g.robot().bound_links()) {
        if (g.clearance(fk, l, cloud).d_signed > tol) return true;
    }
    return false;
}

bool config_in_collision(const RobotModel& r, const JointConfig& q, const PointCloudModel& cloud, double tol,
                         const ClearanceOptions& opt) {
    const RobotGeometry g(r, opt);
    // Wrap without copying the points; the deleter leaves ownership with the caller.
    const PlacedCloud placed(CloudPtr(&cloud, [](const PointCloudModel*) {}), Pose6D::identity());
    return config_in_collision(g, q.q, placed, tol);
}

}  // namespace hbgrasp
