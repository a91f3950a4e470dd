#include "hbgrasp/robot.hpp"

#include "hbgrasp/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace hbgrasp {

double ConvexMesh::circumradius() const {
    double r = 0.0;
    for (const auto& t : triangles) r = std::max({r, t.v1.norm(), t.v2.norm(), t.v3.norm()});
    return r;
}

ConvexMesh make_box_mesh(const Vec3& h) {
    ConvexMesh m;
    auto corner = [&](int sx, int sy, int sz) { return Vec3(sx * h.x(), sy * h.y(), sz * h.z()); };
    // Each face as a quad (a,b,c,d) counter-clockwise seen from outside.
    const std::array<std::array<Vec3, 4>, 6> faces = {{
        {corner(1, -1, -1), corner(1, 1, -1), corner(1, 1, 1), corner(1, -1, 1)},
        {corner(-1, 1, -1), corner(-1, -1, -1), corner(-1, -1, 1), corner(-1, 1, 1)},
        {corner(1, 1, -1), corner(-1, 1, -1), corner(-1, 1, 1), corner(1, 1, 1)},
        {corner(-1, -1, -1), corner(1, -1, -1), corner(1, -1, 1), corner(-1, -1, 1)},
        {corner(-1, -1, 1), corner(1, -1, 1), corner(1, 1, 1), corner(-1, 1, 1)},
        {corner(-1, 1, -1), corner(1, 1, -1), corner(1, -1, -1), corner(-1, -1, -1)},
    }};
    for (const auto& f : faces) {
        for (const auto& tri : {std::array<Vec3, 3>{f[0], f[1], f[2]}, std::array<Vec3, 3>{f[0], f[2], f[3]}}) {
            const Vec3 n = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalized();
            m.triangles.push_back({tri[0], tri[1], tri[2], n});
        }
    }
    return m;
}

void validate_convex_mesh(const ConvexMesh& mesh) {
    if (mesh.triangles.size() < 4) throw InvalidArgument("bound mesh needs at least 4 triangles");
    Vec3 c = Vec3::Zero();
    for (const auto& t : mesh.triangles) c += t.v1 + t.v2 + t.v3;
    c /= 3.0 * static_cast<double>(mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
        const Vec3 n = (t.v2 - t.v1).cross(t.v3 - t.v1);
        if (n.norm() < 1e-12) throw InvalidArgument("bound mesh has a degenerate triangle");
        if ((n.normalized() - t.normal).norm() > 1e-6) throw InvalidArgument("bound mesh normal disagrees with winding");
        if (t.normal.dot(t.v1 - c) <= 0.0) throw InvalidArgument("bound mesh normal points inward");
        for (const auto& o : mesh.triangles) {
            for (const Vec3& v : {o.v1, o.v2, o.v3}) {
                if (t.normal.dot(v - t.v1) > 1e-9) throw InvalidArgument("bound mesh is not convex");
            }
        }
    }
}

RobotModel::RobotModel(std::string name, std::vector<Link> links, const std::string& wrist_link)
    : name_(std::move(name)), links_(std::move(links)) {
    if (links_.empty()) throw InvalidArgument("robot has no links");
    int roots = 0;
    for (std::size_t i = 0; i < links_.size(); ++i) {
        const Link& l = links_[i];
        if (l.parent < 0) {
            ++roots;
        } else if (l.parent >= static_cast<int>(i)) {
            // parents precede children, which also rules out cycles
            throw InvalidArgument("link '" + l.name + "' must be listed after its parent");
        }
        if (l.joint.type == JointType::Revolute) {
            if (!(l.joint.lower < l.joint.upper)) throw InvalidArgument("link '" + l.name + "' has an empty joint range");
            if (l.joint.axis.norm() < 1e-9) throw InvalidArgument("link '" + l.name + "' has a zero joint axis");
        }
        if (l.bound) validate_convex_mesh(l.bound->mesh);
    }
    if (roots != 1) throw InvalidArgument("robot must have exactly one root link");

    int max_finger = -1;
    for (auto& l : links_) {
        l.joint.axis.normalize();
        if (l.fingertip) l.fingertip->inward_normal.normalize();
        max_finger = std::max(max_finger, l.finger);
        if (l.finger >= 0) l.hand = true;
    }
    finger_links_.assign(static_cast<std::size_t>(max_finger + 1), {});
    fingertip_links_.assign(static_cast<std::size_t>(max_finger + 1), -1);
    finger_dofs_.assign(static_cast<std::size_t>(max_finger + 1), 0);

    // Arm joints occupy the leading configuration slots, fingers follow in finger order.
    std::vector<double> lo, hi;
    auto assign = [&](Link& l) {
        l.dof_index = dof_++;
        lo.push_back(l.joint.lower);
        hi.push_back(l.joint.upper);
    };
    for (auto& l : links_) {
        if (l.joint.type == JointType::Revolute && l.finger < 0) assign(l);
    }
    arm_dof_ = dof_;
    for (int f = 0; f <= max_finger; ++f) {
        for (std::size_t i = 0; i < links_.size(); ++i) {
            Link& l = links_[i];
            if (l.finger != f) continue;
            finger_links_[f].push_back(static_cast<int>(i));
            if (l.joint.type == JointType::Revolute) {
                assign(l);
                ++finger_dofs_[f];
            }
            if (l.fingertip) {
                if (fingertip_links_[f] >= 0) throw InvalidArgument("finger has more than one fingertip");
                fingertip_links_[f] = static_cast<int>(i);
            }
        }
        if (finger_links_[f].empty()) throw InvalidArgument("finger indices must be contiguous from 0");
        if (fingertip_links_[f] < 0) throw InvalidArgument("every finger needs a fingertip frame");
    }
    lower_ = Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    upper_ = Eigen::Map<Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));

    wrist_ = link_index(wrist_link);
    if (wrist_ < 0) throw InvalidArgument("unknown wrist link '" + wrist_link + "'");

    for (std::size_t i = 0; i < links_.size(); ++i) {
        if (!links_[i].bound) continue;
        bound_links_.push_back(static_cast<int>(i));
        if (links_[i].hand) hand_bound_links_.push_back(static_cast<int>(i));
    }

    // Downstream extent of every link, children after parents so walk backwards.
    std::vector<double> extent(links_.size(), 0.0);
    for (std::size_t ii = links_.size(); ii-- > 0;) {
        const Link& l = links_[ii];
        double e = 0.0;
        if (l.bound) e = std::max(e, l.bound->offset.position().norm() + l.bound->mesh.circumradius());
        if (l.fingertip) e = std::max(e, l.fingertip->offset.position().norm());
        for (std::size_t c = ii + 1; c < links_.size(); ++c) {
            if (links_[c].parent == static_cast<int>(ii)) e = std::max(e, links_[c].offset.position().norm() + extent[c]);
        }
        extent[ii] = e;
    }
    lever_ = Eigen::VectorXd::Zero(dof_);
    for (std::size_t i = 0; i < links_.size(); ++i) {
        if (links_[i].dof_index >= 0) lever_[links_[i].dof_index] = extent[i];
    }

    reach_ = 0.0;
    for (int i = wrist_; i >= 0 && links_[i].parent >= 0; i = links_[i].parent) reach_ += links_[i].offset.position().norm();
}

int RobotModel::link_index(const std::string& name) const {
    for (std::size_t i = 0; i < links_.size(); ++i) {
        if (links_[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

JointConfig RobotModel::make_config(const Eigen::VectorXd& q) const {
    if (q.size() != dof_) throw InvalidArgument("configuration has wrong dimension");
    JointConfig c(q.cwiseMax(lower_).cwiseMin(upper_));
    c.clamped = (c.q - q).cwiseAbs().maxCoeff() > 0.0;
    return c;
}

double RobotModel::workspace_displacement_bound(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return (a - b).cwiseAbs().dot(lever_);
}

Vec3 RobotModel::base_position() const {
    for (const auto& l : links_) {
        if (l.parent < 0) return l.offset.position();
    }
    return Vec3::Zero();
}

std::vector<int> RobotModel::finger_joint_indices() const {
    std::vector<int> out;
    for (int i = arm_dof_; i < dof_; ++i) out.push_back(i);
    return out;
}

FkResult fk_links(const RobotModel& r, const Eigen::VectorXd& q) {
    if (q.size() != r.dof()) {
        throw InvalidArgument("fk_links: configuration has " + std::to_string(q.size()) + " entries, robot has " +
                              std::to_string(r.dof()) + " DoF");
    }
    FkResult out;
    out.links.resize(r.links().size());
    for (std::size_t i = 0; i < r.links().size(); ++i) {
        const Link& l = r.link(i);
        Pose6D joint_frame = l.parent < 0 ? l.offset : compose(out.links[l.parent], l.offset);
        if (l.dof_index >= 0) {
            joint_frame = compose(joint_frame, Pose6D::from_axis_angle(l.joint.axis, q[l.dof_index]));
        }
        out.links[i] = joint_frame;
    }
    out.fingertips.resize(r.finger_count());
    for (int f = 0; f < r.finger_count(); ++f) {
        const int li = r.fingertip_link(f);
        out.fingertips[f] = compose(out.links[li], r.link(li).fingertip->offset);
    }
    return out;
}

Pose6D bound_pose(const RobotModel& r, const FkResult& fk, int link) {
    const auto& b = r.link(link).bound;
    if (!b) throw InvalidArgument("link '" + r.link(link).name + "' has no bound");
    return compose(fk.links[link], b->offset);
}

Eigen::MatrixXd wrist_jacobian(const RobotModel& r, const Eigen::VectorXd& q) {
    const FkResult fk = fk_links(r, q);
    const Vec3 p = fk.links[r.wrist_link()].position();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(6, r.arm_dof());
    // Only joints on the chain from the root to the wrist contribute.
    for (int i = r.wrist_link(); i >= 0; i = r.link(i).parent) {
        const Link& l = r.link(i);
        if (l.dof_index < 0 || l.dof_index >= r.arm_dof()) continue;
        const Pose6D& frame = fk.links[i];  // the joint rotates about its axis at this origin
        const Vec3 z = frame.rotate(l.joint.axis);
        J.block<3, 1>(0, l.dof_index) = z.cross(p - frame.position());
        J.block<3, 1>(3, l.dof_index) = z;
    }
    return J;
}

namespace {

Eigen::Matrix<double, 6, 1> wrist_error(const Pose6D& target, const Pose6D& current) {
    Eigen::Matrix<double, 6, 1> e;
    e.head<3>() = target.position() - current.position();
    e.tail<3>() = rotation_vector(target.orientation() * current.orientation().conjugate());
    return e;
}

}  // namespace

IkResult ik_goal(const RobotModel& r, const Pose6D& target_wrist, const Eigen::VectorXd& finger_shape,
                 const JointConfig& seed, const IkOptions& opt) {
    const int nf = r.dof() - r.arm_dof();
    if (finger_shape.size() != nf) throw InvalidArgument("ik_goal: finger shape has wrong dimension");
    if (seed.size() != r.dof()) throw InvalidArgument("ik_goal: seed has wrong dimension");
    if ((target_wrist.position() - r.base_position()).norm() > r.reach() + opt.pos_tol) {
        throw Unreachable("ik_goal: target is outside the arm's reach");
    }

    Eigen::VectorXd q = seed.q;
    q.tail(nf) = finger_shape;
    q = r.make_config(q).q;

    const Eigen::VectorXd lo = r.lower().head(r.arm_dof());
    const Eigen::VectorXd hi = r.upper().head(r.arm_dof());
    Eigen::Matrix<double, 6, 1> w;
    w << 1, 1, 1, opt.rot_weight, opt.rot_weight, opt.rot_weight;

    IkResult best;
    double best_cost = std::numeric_limits<double>::infinity();
    double prev_cost = std::numeric_limits<double>::infinity();
    int rising = 0;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        const Pose6D cur = fk_links(r, q).links[r.wrist_link()];
        const auto e = wrist_error(target_wrist, cur);
        const double pe = e.head<3>().norm();
        const double re = e.tail<3>().norm();
        const double cost = pe + opt.rot_weight * re;
        if (cost < best_cost) {
            best_cost = cost;
            best.config = r.make_config(q);
            best.pos_error = pe;
            best.rot_error = re;
            best.iterations = it;
        }
        if (pe <= opt.pos_tol && re <= opt.rot_tol) {
            best.converged = true;
            return best;
        }
        if (it == opt.max_iterations) break;
        rising = cost > prev_cost ? rising + 1 : 0;
        if (rising >= opt.divergence_window) throw Unreachable("ik_goal: error diverged");
        prev_cost = cost;

        const Eigen::MatrixXd J = w.asDiagonal() * wrist_jacobian(r, q);
        const Eigen::Matrix<double, 6, 1> ew = w.cwiseProduct(e);
        const Eigen::MatrixXd JJt = J * J.transpose() + opt.damping * opt.damping * Eigen::MatrixXd::Identity(6, 6);
        Eigen::VectorXd dq = J.transpose() * JJt.ldlt().solve(ew);
        const double m = dq.cwiseAbs().maxCoeff();
        if (m > opt.max_step) dq *= opt.max_step / m;
        q.head(r.arm_dof()) = (q.head(r.arm_dof()) + dq).cwiseMax(lo).cwiseMin(hi);
    }
    return best;
}

JointConfig interpolate(const JointConfig& a, const JointConfig& b, double s) {
    if (a.size() != b.size()) throw InvalidArgument("interpolate: dimension mismatch");
    return JointConfig(a.q + s * (b.q - a.q));
}

namespace {

using nlohmann::json;

Pose6D pose_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 7) throw ScenarioError(what + ": pose must be 7 numbers px py pz qw qx qy qz");
    std::array<double, 7> v{};
    for (std::size_t i = 0; i < 7; ++i) v[i] = j.at(i).get<double>();
    return Pose6D::from_array(v);
}

Vec3 vec3_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw ScenarioError(what + ": expected 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

RobotModel robot_from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("robot description: ") + e.what());
    }
    try {
        std::vector<Link> links;
        std::map<std::string, int> by_name;
        for (const auto& jl : doc.at("links")) {
            Link l;
            l.name = jl.at("name").get<std::string>();
            if (by_name.contains(l.name)) throw ScenarioError("duplicate link name '" + l.name + "'");
            const auto& jp = jl.at("parent");
            if (!jp.is_null()) {
                const auto it = by_name.find(jp.get<std::string>());
                if (it == by_name.end()) throw ScenarioError("link '" + l.name + "': parent must be listed earlier");
                l.parent = it->second;
            }
            const std::string type = jl.value("type", "revolute");
            if (type == "revolute") {
                l.joint.type = JointType::Revolute;
                l.joint.axis = vec3_from_json(jl.at("axis"), l.name + ".axis");
                const auto& lim = jl.at("limits");
                l.joint.lower = lim.at(0).get<double>();
                l.joint.upper = lim.at(1).get<double>();
            } else if (type == "fixed") {
                l.joint.type = JointType::Fixed;
            } else {
                throw ScenarioError("link '" + l.name + "': unknown joint type '" + type + "'");
            }
            l.offset = pose_from_json(jl.at("offset_pose"), l.name + ".offset_pose");
            if (jl.contains("mesh_box")) {
                const auto& mb = jl["mesh_box"];
                LinkBound b;
                b.half_extents = vec3_from_json(mb.at("half_extents"), l.name + ".mesh_box.half_extents");
                if (!(b.half_extents.minCoeff() > 0.0)) throw ScenarioError(l.name + ": box half extents must be > 0");
                b.offset = mb.contains("offset") ? pose_from_json(mb["offset"], l.name + ".mesh_box.offset") : Pose6D{};
                b.mesh = make_box_mesh(b.half_extents);
                l.bound = std::move(b);
            }
            if (jl.contains("fingertip")) {
                const auto& ft = jl["fingertip"];
                Fingertip f;
                f.offset = pose_from_json(ft.at("offset_pose"), l.name + ".fingertip.offset_pose");
                f.inward_normal = vec3_from_json(ft.at("inward_normal"), l.name + ".fingertip.inward_normal");
                if (f.inward_normal.norm() < 1e-9) throw ScenarioError(l.name + ": zero fingertip normal");
                l.fingertip = f;
            }
            l.finger = jl.value("finger", -1);
            l.hand = jl.value("hand", false);
            by_name[l.name] = static_cast<int>(links.size());
            links.push_back(std::move(l));
        }
        return RobotModel(doc.value("name", "robot"), std::move(links), doc.at("wrist").get<std::string>());
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("robot description: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw ScenarioError(std::string("robot description: ") + e.what());
    }
}

RobotModel load_robot(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return robot_from_json_text(ss.str());
}

RobotModel default_robot() { return robot_from_json_text(default_robot_json()); }

}  // namespace hbgrasp
