#include "hbgrasp/cloud.hpp"

#include "hbgrasp/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>

namespace hbgrasp {

Aabb Aabb::transformed(const Pose6D& p) const {
    Aabb out;
    if (empty()) return out;
    for (int c = 0; c < 8; ++c) {
        const Vec3 corner((c & 1) ? max.x() : min.x(), (c & 2) ? max.y() : min.y(), (c & 4) ? max.z() : min.z());
        out.extend(p.transform_point(corner));
    }
    return out;
}

PointCloudModel::PointCloudModel(std::vector<OrientedPoint> points, const Pose6D& frame)
    : points_(std::move(points)), frame_(frame) {
    std::vector<Vec3> pos;
    pos.reserve(points_.size());
    for (auto& p : points_) {
        const double n = p.normal.norm();
        // already-unit normals are left untouched so save/load round-trips exactly
        if (n > 0.0 && std::isfinite(n) && std::abs(n - 1.0) > 1e-12) p.normal /= n;
        aabb_.extend(p.position);
        pos.push_back(p.position);
    }
    index_ = KdTree<3>(std::move(pos));
}

Vec3 PointCloudModel::centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points_) c += p.position;
    return points_.empty() ? c : Vec3(c / static_cast<double>(points_.size()));
}

std::vector<Neighbor> PointCloudModel::nearest_indices(const Vec3& q, std::size_t n) const {
    if (points_.empty()) throw InvalidArgument("nearest: empty cloud");
    if (n == 0) throw InvalidArgument("nearest: n must be >= 1");
    return index_.knn(q, n);
}

std::vector<std::pair<OrientedPoint, double>> PointCloudModel::nearest(const Vec3& q, std::size_t n) const {
    std::vector<std::pair<OrientedPoint, double>> out;
    for (const auto& nb : nearest_indices(q, n)) out.emplace_back(points_[nb.index], nb.distance);
    return out;
}

PointCloudModel PointCloudModel::transformed(const Pose6D& t) const {
    std::vector<OrientedPoint> pts;
    pts.reserve(points_.size());
    for (const auto& p : points_) pts.push_back({t.transform_point(p.position), t.rotate(p.normal)});
    return PointCloudModel(std::move(pts), compose(t, frame_));
}

PlacedCloud::PlacedCloud(CloudPtr m, const Pose6D& p) : model(std::move(m)), pose(p) {
    if (!model) throw InvalidArgument("PlacedCloud: null model");
    world_aabb = model->aabb().transformed(pose);
}

PointCloudModel PlacedCloud::materialize() const { return model->transformed(pose); }

void ViewMask::validate() const {
    if (view_count < 1) throw InvalidArgument("ViewMask: view_count must be >= 1");
    if (selected.empty()) throw InvalidArgument("ViewMask: no sector selected");
    for (int s : selected) {
        if (s < 0 || s >= view_count) throw InvalidArgument("ViewMask: sector index out of range");
    }
}

ViewMask ViewMask::all(int view_count) {
    ViewMask m;
    m.view_count = view_count;
    for (int i = 0; i < view_count; ++i) m.selected.insert(i);
    return m;
}

int view_sector(const Vec3& p, const Vec3& center, int view_count) {
    const double az = std::atan2(p.y() - center.y(), p.x() - center.x());  // [-pi, pi]
    const double width = 2.0 * std::numbers::pi / view_count;
    int s = static_cast<int>(std::floor((az + std::numbers::pi) / width));
    return ((s % view_count) + view_count) % view_count;
}

PointCloudModel apply_view_mask(const PointCloudModel& cloud, const ViewMask& mask, const Vec3& center) {
    mask.validate();
    if (static_cast<int>(mask.selected.size()) == mask.view_count) return cloud;
    std::vector<OrientedPoint> kept;
    for (const auto& p : cloud.points()) {
        if (mask.selected.contains(view_sector(p.position, center, mask.view_count))) kept.push_back(p);
    }
    if (kept.empty()) throw InvalidArgument("apply_view_mask: mask removes every point");
    return PointCloudModel(std::move(kept), cloud.frame());
}

namespace {

// Smallest-eigenvalue eigenvector of the scatter of pts around their mean.
// Returns false when the points are (numerically) collinear or coincident.
bool fit_plane_normal(const std::vector<Vec3>& pts, Vec3& normal) {
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const Vec3 ev = es.eigenvalues();
    normal = es.eigenvectors().col(0);
    return ev[2] > 0.0 && ev[1] > 1e-9 * ev[2];
}

}  // namespace

PointCloudModel estimate_normals(std::span<const Vec3> points, std::size_t k) {
    if (k < 2) throw InvalidArgument("estimate_normals: k must be >= 2");
    if (points.size() < k + 1) throw InvalidArgument("estimate_normals: need at least k+1 points");

    std::vector<Vec3> all(points.begin(), points.end());
    const KdTree<3> tree(all);
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : all) centroid += p;
    centroid /= static_cast<double>(all.size());

    Vec3 global_normal;
    if (!fit_plane_normal(all, global_normal)) global_normal = Vec3::UnitZ();

    std::vector<OrientedPoint> out;
    out.reserve(all.size());
    std::vector<Vec3> neigh;
    for (const auto& p : all) {
        neigh.clear();
        for (const auto& nb : tree.knn(p, k + 1)) neigh.push_back(all[nb.index]);
        Vec3 n;
        if (!fit_plane_normal(neigh, n)) n = global_normal;
        const double s = n.dot(p - centroid);
        if (s < 0.0) n = -n;
        out.push_back({p, n.normalized()});
    }
    return PointCloudModel(std::move(out));
}

namespace {

std::vector<OrientedPoint> parse_ply(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    std::size_t vertex_count = 0;
    std::vector<std::string> props;
    bool in_vertex = false;
    bool saw_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw IoError(path.string() + ": only ascii PLY is supported");
            saw_format = true;
        } else if (tok == "element") {
            std::string name;
            ls >> name;
            in_vertex = name == "vertex";
            if (in_vertex) ls >> vertex_count;
        } else if (tok == "property" && in_vertex) {
            std::string type, name;
            ls >> type >> name;
            props.push_back(name);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!saw_format) throw IoError(path.string() + ": missing PLY format line");
    auto col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < props.size(); ++i) {
            if (props[i] == name) return static_cast<int>(i);
        }
        return -1;
    };
    const int ix = col("x"), iy = col("y"), iz = col("z");
    const int inx = col("nx"), iny = col("ny"), inz = col("nz");
    if (ix < 0 || iy < 0 || iz < 0 || inx < 0 || iny < 0 || inz < 0) {
        throw IoError(path.string() + ": PLY vertices need x y z nx ny nz");
    }
    std::vector<OrientedPoint> pts;
    pts.reserve(vertex_count);
    std::vector<double> vals(props.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
        if (!std::getline(in, line)) throw IoError(path.string() + ": truncated vertex list");
        std::istringstream ls(line);
        for (auto& x : vals) {
            if (!(ls >> x)) throw IoError(path.string() + ": malformed vertex line");
        }
        pts.push_back({Vec3(vals[ix], vals[iy], vals[iz]), Vec3(vals[inx], vals[iny], vals[inz])});
    }
    return pts;
}

std::vector<OrientedPoint> parse_csv(std::istream& in, const std::filesystem::path& path) {
    std::vector<OrientedPoint> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        for (char& c : line) {
            if (c == ',') c = ' ';
        }
        std::istringstream ls(line);
        double v[6];
        int n = 0;
        while (n < 6 && (ls >> v[n])) ++n;
        if (n == 0 && pts.empty()) continue;  // header row
        if (n != 6) throw IoError(path.string() + ": CSV rows need x,y,z,nx,ny,nz");
        pts.push_back({Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])});
    }
    return pts;
}

}  // namespace

PointCloudModel load_cloud(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string first;
    std::getline(in, first);
    if (!first.empty() && first.back() == '\r') first.pop_back();
    std::vector<OrientedPoint> pts;
    if (first == "ply") {
        pts = parse_ply(in, path);
    } else {
        in.clear();
        in.seekg(0);
        pts = parse_csv(in, path);
    }
    if (pts.empty()) throw IoError(path.string() + ": no points");
    return PointCloudModel(std::move(pts));
}

void save_ply(const PointCloudModel& cloud, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
        << "\nproperty double x\nproperty double y\nproperty double z\n"
           "property double nx\nproperty double ny\nproperty double nz\nend_header\n";
    out << std::setprecision(17);
    for (const auto& p : cloud.points()) {
        out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << p.normal.x() << ' '
            << p.normal.y() << ' ' << p.normal.z() << '\n';
    }
}

void save_csv(const PointCloudModel& cloud, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "x,y,z,nx,ny,nz\n" << std::setprecision(17);
    for (const auto& p : cloud.points()) {
        out << p.position.x() << ',' << p.position.y() << ',' << p.position.z() << ',' << p.normal.x() << ','
            << p.normal.y() << ',' << p.normal.z() << '\n';
    }
}

}  // namespace hbgrasp
