#include "hbgrasp/objects.hpp"

#include "hbgrasp/error.hpp"
#include "hbgrasp/rng.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <set>

namespace hbgrasp {

namespace {

constexpr double kPi = std::numbers::pi;

class Sampler {
public:
    Sampler(double density, std::uint64_t seed) : density_(density), rng_(seed) {}

    std::size_t count(double area) const {
        return static_cast<std::size_t>(std::max(1.0, std::round(area * density_)));
    }

    /// Rectangle origin + s*e1 + t*e2, s,t in [0,1]; normal along e1 x e2.
    void rect(const Vec3& origin, const Vec3& e1, const Vec3& e2, std::size_t n = 0) {
        const Vec3 nrm = e1.cross(e2).normalized();
        if (n == 0) n = count(e1.cross(e2).norm());
        for (std::size_t i = 0; i < n; ++i) add(origin + rng_.uniform() * e1 + rng_.uniform() * e2, nrm);
    }

    /// Axis-aligned box [lo, hi] surface.
    void box(const Vec3& lo, const Vec3& hi, std::size_t per_face = 0) {
        const Vec3 s = hi - lo;
        const Vec3 ex(s.x(), 0, 0), ey(0, s.y(), 0), ez(0, 0, s.z());
        rect(lo, ey, ex, per_face);                      // bottom, -z
        rect(lo + ez, ex, ey, per_face);                 // top, +z
        rect(lo, ex, ez, per_face);                      // -y
        rect(lo + ey, ez, ex, per_face);                 // +y
        rect(lo, ez, ey, per_face);                      // -x
        rect(lo + ex, ey, ez, per_face);                 // +x
    }

    /// Surface of revolution about z given r(z) on [z0, z1]; normal from the slope.
    void revolve(const std::function<double(double)>& r, double z0, double z1) {
        // area estimate from a fine profile integration
        double area = 0.0;
        const int steps = 200;
        for (int i = 0; i < steps; ++i) {
            const double za = z0 + (z1 - z0) * i / steps, zb = z0 + (z1 - z0) * (i + 1) / steps;
            area += kPi * (r(za) + r(zb)) * std::hypot(zb - za, r(zb) - r(za));
        }
        const std::size_t n = count(area);
        const double rmax = [&] {
            double m = 0.0;
            for (int i = 0; i <= steps; ++i) m = std::max(m, r(z0 + (z1 - z0) * i / steps));
            return m;
        }();
        // Rejection on the radius so points are uniform in area for slow slopes.
        std::size_t got = 0;
        while (got < n) {
            const double z = rng_.uniform(z0, z1);
            const double rz = r(z);
            if (rng_.uniform() * rmax > rz) continue;
            const double th = rng_.uniform(0.0, 2.0 * kPi);
            const double h = 1e-6;
            const double dr = (r(std::min(z1, z + h)) - r(std::max(z0, z - h))) / (std::min(z1, z + h) - std::max(z0, z - h));
            const Vec3 radial(std::cos(th), std::sin(th), 0.0);
            add(rz * radial + Vec3(0, 0, z), (radial - dr * Vec3::UnitZ()).normalized());
            ++got;
        }
    }

    /// Disc of radius r at height z with normal +z or -z.
    void disc(double r, double z, bool up) {
        const std::size_t n = count(kPi * r * r);
        for (std::size_t i = 0; i < n; ++i) {
            const double rr = r * std::sqrt(rng_.uniform());
            const double th = rng_.uniform(0.0, 2.0 * kPi);
            add(Vec3(rr * std::cos(th), rr * std::sin(th), z), up ? Vec3(Vec3::UnitZ()) : Vec3(-Vec3::UnitZ()));
        }
    }

    void add(const Vec3& p, const Vec3& n) { pts_.push_back({p, n}); }
    Rng& rng() { return rng_; }
    std::vector<OrientedPoint>& points() { return pts_; }

private:
    double density_;
    Rng rng_;
    std::vector<OrientedPoint> pts_;
};

bool inside_box(const Vec3& p, const Vec3& lo, const Vec3& hi, double eps = 1e-9) {
    return (p.array() > lo.array() + eps).all() && (p.array() < hi.array() - eps).all();
}

class Params {
public:
    Params(const ObjectParams& p, std::set<std::string> allowed) : p_(p) {
        allowed.insert("density");
        allowed.insert("seed");
        for (const auto& [k, v] : p_) {
            if (!allowed.contains(k)) throw InvalidArgument("make_object: unknown parameter '" + k + "'");
        }
    }
    double get(const std::string& k, double def, double lo = 1e-4, double hi = 10.0) const {
        const auto it = p_.find(k);
        const double v = it == p_.end() ? def : it->second;
        if (!(v >= lo && v <= hi)) throw InvalidArgument("make_object: parameter '" + k + "' out of range");
        return v;
    }

private:
    const ObjectParams& p_;
};

Sampler make_sampler(const Params& ps) {
    return {ps.get("density", 100000.0, 1000.0, 1e8), static_cast<std::uint64_t>(ps.get("seed", 0.0, 0.0, 1e15))};
}

PointCloudModel make_box(const ObjectParams& p) {
    const Params ps(p, {"sx", "sy", "sz", "points_per_face"});
    auto s = make_sampler(ps);
    const Vec3 size(ps.get("sx", 0.1), ps.get("sy", 0.1), ps.get("sz", 0.1));
    const auto per_face = static_cast<std::size_t>(ps.get("points_per_face", 0.0, 0.0, 1e7));
    s.box(Vec3(-size.x() / 2, -size.y() / 2, 0.0), Vec3(size.x() / 2, size.y() / 2, size.z()), per_face);
    return PointCloudModel(std::move(s.points()));
}

PointCloudModel make_cylinder(const ObjectParams& p) {
    const Params ps(p, {"radius", "height", "caps"});
    auto s = make_sampler(ps);
    const double r = ps.get("radius", 0.04), h = ps.get("height", 0.15);
    s.revolve([r](double) { return r; }, 0.0, h);
    if (ps.get("caps", 1.0, 0.0, 1.0) > 0.5) {
        s.disc(r, 0.0, false);
        s.disc(r, h, true);
    }
    return PointCloudModel(std::move(s.points()));
}

PointCloudModel make_bottle(const ObjectParams& p) {
    const Params ps(p, {"radius", "height", "neck_radius"});
    auto s = make_sampler(ps);
    const double r = ps.get("radius", 0.033), h = ps.get("height", 0.2), rn = ps.get("neck_radius", 0.012);
    if (!(rn < r)) throw InvalidArgument("make_object: neck_radius must be below radius");
    const double body = 0.62 * h, shoulder = 0.88 * h;
    s.revolve(
        [=](double z) {
            if (z <= body) return r;
            if (z >= shoulder) return rn;
            const double t = (z - body) / (shoulder - body);
            return r + (rn - r) * (0.5 - 0.5 * std::cos(kPi * t));
        },
        0.0, h);
    s.disc(r, 0.0, false);
    s.disc(rn, h, true);
    return PointCloudModel(std::move(s.points()));
}

PointCloudModel make_jug(const ObjectParams& p) {
    const Params ps(p, {"radius", "height", "handle_radius", "handle_tube"});
    auto s = make_sampler(ps);
    const double r = ps.get("radius", 0.04), h = ps.get("height", 0.16);
    const double hr = ps.get("handle_radius", 0.045), ht = ps.get("handle_tube", 0.008);
    if (!(hr < h / 2)) throw InvalidArgument("make_object: handle_radius must be below height / 2");
    s.revolve([r](double) { return r; }, 0.0, h);
    s.disc(r, 0.0, false);  // open top
    // Handle: half torus in the xz plane bulging out on +x.
    const Vec3 c(r, 0.0, 0.55 * h);
    const std::size_t n = s.count(2.0 * kPi * ht * kPi * hr);
    std::size_t got = 0;
    while (got < n) {
        const double th = s.rng().uniform(-kPi / 2, kPi / 2);
        const double ph = s.rng().uniform(0.0, 2.0 * kPi);
        // area element ~ (hr + ht cos ph)
        if (s.rng().uniform() * (hr + ht) > hr + ht * std::cos(ph)) continue;
        ++got;
        const Vec3 radial(std::cos(th), 0.0, std::sin(th));
        const Vec3 nrm = std::cos(ph) * radial + std::sin(ph) * Vec3::UnitY();
        const Vec3 q = c + hr * radial + ht * nrm;
        if (std::hypot(q.x(), q.y()) < r) continue;
        s.add(q, nrm);
    }
    return PointCloudModel(std::move(s.points()));
}

/// Union of axis-aligned boxes: surface samples not strictly inside another box.
PointCloudModel box_union(Sampler& s, const std::vector<std::pair<Vec3, Vec3>>& boxes) {
    std::vector<OrientedPoint> out;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
        s.points().clear();
        s.box(boxes[b].first, boxes[b].second);
        for (const auto& pt : s.points()) {
            bool hidden = false;
            for (std::size_t o = 0; o < boxes.size(); ++o) {
                if (o != b && inside_box(pt.position, boxes[o].first, boxes[o].second)) hidden = true;
            }
            if (!hidden) out.push_back(pt);
        }
    }
    return PointCloudModel(std::move(out));
}

PointCloudModel make_stapler(const ObjectParams& p) {
    const Params ps(p, {"length", "width"});
    auto s = make_sampler(ps);
    const double l = ps.get("length", 0.16), w = ps.get("width", 0.045);
    return box_union(s, {{Vec3(-l / 2, -w / 2, 0.0), Vec3(l / 2, w / 2, 0.015)},
                         {Vec3(-l / 2, -0.4 * w, 0.014), Vec3(0.4 * l, 0.4 * w, 0.045)}});
}

PointCloudModel make_spray(const ObjectParams& p) {
    const Params ps(p, {"radius", "height"});
    auto s = make_sampler(ps);
    const double r = ps.get("radius", 0.035), h = ps.get("height", 0.18);
    const double neck = 0.015;
    s.revolve([=](double z) { return z < h - 0.02 ? r : r + (neck - r) * (z - (h - 0.02)) / 0.02; }, 0.0, h);
    s.disc(r, 0.0, false);
    auto body = std::move(s.points());
    s.points().clear();
    // Trigger head overhanging on +x.
    const Vec3 lo(-0.02, -0.015, h), hi(0.05, 0.015, h + 0.04);
    s.box(lo, hi);
    for (const auto& pt : s.points()) body.push_back(pt);
    return PointCloudModel(std::move(body));
}

PointCloudModel make_lshape(const ObjectParams& p) {
    const Params ps(p, {"long", "short", "width", "height"});
    auto s = make_sampler(ps);
    const double a = ps.get("long", 0.12), b = ps.get("short", 0.10), w = ps.get("width", 0.04), h = ps.get("height", 0.06);
    if (!(w < a && w < b)) throw InvalidArgument("make_object: width must be below both arm lengths");
    // Footprint bounding box centred on the origin.
    const Vec3 o(-a / 2, -b / 2, 0.0);
    return box_union(s, {{o, o + Vec3(a, w, h)}, {o, o + Vec3(w, b, h)}});
}

}  // namespace

const std::vector<std::string>& object_kinds() {
    static const std::vector<std::string> kinds = {"jug", "bottle", "stapler", "spray", "box", "lshape", "cylinder"};
    return kinds;
}

PointCloudModel make_object(const std::string& kind, const ObjectParams& params) {
    if (kind == "box") return make_box(params);
    if (kind == "cylinder") return make_cylinder(params);
    if (kind == "bottle") return make_bottle(params);
    if (kind == "jug") return make_jug(params);
    if (kind == "stapler") return make_stapler(params);
    if (kind == "spray") return make_spray(params);
    if (kind == "lshape") return make_lshape(params);
    throw InvalidArgument("unknown object kind '" + kind + "'");
}

}  // namespace hbgrasp
