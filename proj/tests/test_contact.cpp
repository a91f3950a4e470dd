#include "hbgrasp/contact.hpp"
#include "hbgrasp/error.hpp"
#include "hbgrasp/objects.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace hbgrasp;
using namespace hbgrasp::test;

namespace {

PointCloudModel cloud_of(const std::vector<Vec3>& pts) {
    std::vector<OrientedPoint> o;
    for (const auto& p : pts) o.push_back({p, Vec3::UnitZ()});
    return PointCloudModel(std::move(o));
}

}  // namespace

TEST_CASE("clearance examples") {
    const ConvexMesh cube = make_box_mesh(Vec3::Constant(0.5));
    ClearanceOptions opt;
    opt.n_nearest = 5;
    opt.fast_reject = false;

    const PointCloudModel cluster = cloud_of({Vec3(3, 0, 0), Vec3(3, 0.1, 0), Vec3(3, 0, 0.1), Vec3(3.1, 0, 0), Vec3(3, -0.1, 0)});
    const ClearanceResult far = link_clearance(cube, Pose6D(), cluster, opt);
    CHECK(far.d_signed == doctest::Approx(std::sqrt(0.75) - 3.02).epsilon(1e-12));
    CHECK(far.d_signed < 0.0);
    CHECK(far.d_obs == doctest::Approx(-far.d_signed));

    // points on every side average to the centre: the mean-based depth reads as inside
    const PointCloudModel ring = cloud_of({Vec3(3, 0, 0), Vec3(-3, 0, 0), Vec3(0, 3, 0), Vec3(0, -3, 0), Vec3(0, 0, 3)});
    CHECK(link_clearance(cube, Pose6D(), ring, opt).d_signed > 0.0);

    const PointCloudModel inside = cloud_of(std::vector<Vec3>(5, Vec3::Zero()));
    const ClearanceResult deep = link_clearance(cube, Pose6D(), inside, opt);
    CHECK(deep.d_signed >= 0.0);
    CHECK(deep.d_obs == 0.0);

    std::vector<Vec3> axis;
    for (int i = 0; i < 5; ++i) axis.emplace_back(1.5, 0.01 * i, 0.0);
    const PointCloudModel line = cloud_of(axis);
    CHECK(link_clearance(cube, Pose6D(), line, opt).d_signed ==
          doctest::Approx(depth_oracle(cube, Pose6D(), line, 5, false)).epsilon(1e-12));
    CHECK_THROWS_AS(link_clearance(cube, Pose6D(), PointCloudModel(), opt), InvalidArgument);
}

TEST_CASE("clearance matches the formula oracle") {
    Rng rng(61);
    const PointCloudModel jug = make_object("jug");
    for (bool exact : {false, true}) {
        ClearanceOptions opt;
        opt.exact_plane_offset = exact;
        opt.fast_reject = false;
        for (int i = 0; i < 1000; ++i) {
            const ConvexMesh mesh = make_box_mesh(Vec3(rng.uniform(0.005, 0.05), rng.uniform(0.005, 0.05), rng.uniform(0.005, 0.05)));
            const Pose6D link(Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.25)), random_quat(rng));
            opt.n_nearest = 1 + rng.index(16);
            const ClearanceResult r = link_clearance(mesh, link, jug, opt);
            const double want = depth_oracle(mesh, link, jug, opt.n_nearest, exact);
            REQUIRE(std::abs(r.d_signed - want) < 1e-9);
            REQUIRE(r.d_obs == (r.d_signed < 0.0 ? -r.d_signed : 0.0));
            REQUIRE(r.nearest_points.size() == opt.n_nearest);
        }
    }
}

TEST_CASE("exact plane offset gives the point distance for one far point") {
    const ConvexMesh cube = make_box_mesh(Vec3(0.02, 0.03, 0.04));
    ClearanceOptions opt;
    opt.n_nearest = 1;
    opt.exact_plane_offset = true;
    opt.fast_reject = false;
    Rng rng(62);
    for (int i = 0; i < 200; ++i) {
        const Vec3 dir = random_quat(rng) * Vec3::UnitX();
        const Vec3 p = dir * rng.uniform(0.1, 0.5);
        const double dist = (p.cwiseAbs() - Vec3(0.02, 0.03, 0.04)).cwiseMax(0.0).norm();
        const double got = -link_clearance(cube, Pose6D(), cloud_of({p}), opt).d_signed;
        // one face plane underestimates the distance to an edge or corner region
        CHECK(got <= dist + 1e-12);
        CHECK(got >= dist / std::sqrt(3.0) - 1e-12);
    }
}

TEST_CASE("fast reject never changes a verdict") {
    const RobotModel r = default_robot();
    ClearanceOptions on, off;
    off.fast_reject = false;
    const RobotGeometry g_on(r, on), g_off(r, off);
    const auto jug = std::make_shared<const PointCloudModel>(make_object("jug"));
    Rng rng(63);
    int collisions = 0;
    for (int i = 0; i < 1000; ++i) {
        Eigen::VectorXd q(r.dof());
        for (int k = 0; k < r.dof(); ++k) q[k] = rng.uniform(r.lower()[k], r.upper()[k]);
        // place the jug next to the wrist so both verdicts occur
        const FkResult fk = fk_links(r, q);
        const Pose6D pose = Pose6D::translation(fk.links[r.wrist_link()].position() + random_vec(rng, 0.25) - Vec3(0, 0, 0.08));
        const PlacedCloud placed(jug, pose);
        const bool a = config_in_collision(g_on, q, placed), b = config_in_collision(g_off, q, placed);
        REQUIRE(a == b);
        collisions += a;
        for (int l : r.bound_links()) {
            const ClearanceResult x = g_on.clearance(fk, l, placed);
            if (x.rejected) REQUIRE(g_off.clearance(fk, l, placed).d_obs > on.d_max);
        }
    }
    CHECK(collisions > 50);
    CHECK(collisions < 950);
}

TEST_CASE("collision examples") {
    const RobotModel r = default_robot();
    const RobotGeometry g(r, ClearanceOptions{});
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(r.dof());
    const FkResult fk = fk_links(r, q);
    const auto jug = std::make_shared<const PointCloudModel>(make_object("jug"));
    const Vec3 wrist = fk.links[r.wrist_link()].position();
    CHECK_FALSE(config_in_collision(g, q, PlacedCloud(jug, Pose6D::translation(wrist + Vec3(0, 1.0, -0.08)))));
    const int tip = r.fingertip_link(1);
    const Vec3 inside = bound_pose(r, fk, tip).position();
    const auto dot = std::make_shared<const PointCloudModel>(cloud_of(std::vector<Vec3>(8, inside)));
    CHECK(config_in_collision(g, q, PlacedCloud::world(dot)));
    CHECK(config_in_collision(r, r.zero_config(), *dot));
}

TEST_CASE("approach sweep is monotone") {
    const ConvexMesh link = make_box_mesh(Vec3(0.02, 0.01, 0.01));
    std::vector<Vec3> wall;
    for (int i = -10; i <= 10; ++i) {
        for (int j = -10; j <= 10; ++j) wall.emplace_back(0.0, 0.005 * i, 0.005 * j);
    }
    const PointCloudModel cloud = cloud_of(wall);
    ClearanceOptions opt;
    bool hit = false;
    double prev = -std::numeric_limits<double>::infinity();
    for (int s = 0; s <= 400; ++s) {
        const double x = -0.2 + 0.0005 * s;
        const ClearanceResult r = link_clearance(link, Pose6D::translation(Vec3(x, 0.001, -0.002)), cloud, opt);
        if (!r.rejected) {
            CHECK(r.d_signed >= prev - 1e-12);
            prev = r.d_signed;
        }
        const bool now = r.d_signed > 0.002;
        CHECK((now || !hit));
        hit = hit || now;
    }
    CHECK(hit);
}

TEST_CASE("robot approach sweep is monotone") {
    const RobotModel r = default_robot();
    const RobotGeometry g(r, ClearanceOptions{});
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(r.dof());
    const Pose6D wrist = fk_links(r, q).links[r.wrist_link()];
    const auto box = std::make_shared<const PointCloudModel>(make_object("box", {{"sx", 0.06}, {"sy", 0.06}, {"sz", 0.06}}));
    bool hit = false;
    for (int s = 0; s <= 300; ++s) {
        // slide the box along the palm axis toward the hand
        const Vec3 c = wrist.position() + wrist.rotate(Vec3(0.4 - 0.001 * s, 0, 0)) - Vec3(0, 0, 0.03);
        const bool now = config_in_collision(g, q, PlacedCloud(box, Pose6D::translation(c)));
        CHECK((now || !hit));
        hit = hit || now;
    }
    CHECK(hit);
}

TEST_CASE("clearance is Lipschitz away from contact") {
    const ConvexMesh link = make_box_mesh(Vec3(0.02, 0.01, 0.01));
    const PointCloudModel jug = make_object("jug");
    ClearanceOptions opt;
    opt.fast_reject = false;
    Rng rng(64);
    int checked = 0, jumps = 0;
    auto nearest_set = [&](const Vec3& q) {
        std::set<std::size_t> out;
        for (const auto& n : jug.nearest_indices(q, opt.n_nearest)) out.insert(n.index);
        return out;
    };
    while (checked < 1000) {
        const Pose6D p(Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.0, 0.2)), random_quat(rng));
        const ClearanceResult a = link_clearance(link, p, jug, opt);
        if (a.d_signed > -0.005) continue;
        const Vec3 step = (random_quat(rng) * Vec3::UnitX()) * 0.001;
        const ClearanceResult b = link_clearance(link, Pose6D(p.position() + step, p.orientation()), jug, opt);
        ++checked;
        // a change of the nearest set A is a jump in the averaged depth
        const bool lipschitz = std::abs(a.d_obs - b.d_obs) <= 2 * 0.001 + 1e-12;
        if (nearest_set(p.position()) != nearest_set(p.position() + step)) {
            jumps += !lipschitz;
            continue;
        }
        REQUIRE(lipschitz);
    }
    CHECK(jumps < 20);
}
