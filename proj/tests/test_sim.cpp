#include "hbgrasp/bench.hpp"
#include "hbgrasp/error.hpp"
#include "hbgrasp/objects.hpp"
#include "hbgrasp/sim.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace hbgrasp;
using namespace hbgrasp::test;

namespace {

ClearanceOptions exact_offsets() {
    ClearanceOptions c;
    c.exact_plane_offset = true;
    return c;
}

struct Desk {
    RobotModel robot = default_robot();
    RobotGeometry geometry{robot, exact_offsets()};
    CloudPtr jug = std::make_shared<const PointCloudModel>(make_object("jug"));
    GraspSpec grasp = default_grasp("jug", robot);
    Pose6D nominal = Pose6D::translation(Vec3(0.5, 0.0, 0.0));

    BeliefState collapsed(const Pose6D& p, std::size_t n = 100) const {
        return BeliefState(std::vector<Particle>(n, Particle{p, 1.0}), SE3Kernel{});
    }
    TrialRecord run(const BeliefState& b, const Pose6D& truth, Strategy s, std::uint64_t seed, int max_iter = 10) const {
        EpisodeConfig cfg;
        cfg.max_iterations = max_iter;
        return run_episode(geometry, jug, b, grasp, GroundTruth(jug, truth), s, cfg, seed);
    }
    Trajectory plan_to(const Pose6D& estimate, std::uint64_t seed) const {
        PlanContext ctx;
        ctx.geometry = &geometry;
        ctx.mle = PlacedCloud(jug, estimate);
        ctx.hypotheses = {ctx.mle, ctx.mle};
        const Eigen::VectorXd goal = grasp_goal(robot, grasp, estimate, grasp.ik_seed, IkOptions{});
        Eigen::VectorXd closed = goal;
        closed.tail(robot.dof() - robot.arm_dof()) = grasp.closed_fingers;
        Eigen::VectorXd root = grasp.ik_seed;
        root.tail(robot.dof() - robot.arm_dof()) = grasp.pregrasp_fingers;
        return plan_reach(ctx, CostMode::Baseline, root, GoalModel::build(goal, closed, {}), seed);
    }
};

const Desk& desk() {
    static const Desk d;
    return d;
}

bool required_fingers_touch(const Desk& d, const std::vector<double>& q, const GroundTruth& gt) {
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
    const FkResult fk = fk_links(d.robot, v);
    for (int f : d.grasp.required_fingers) {
        bool touching = false;
        for (int l : d.robot.finger_links(f)) {
            if (d.robot.link(l).bound && d.geometry.clearance(fk, l, gt.cloud).d_obs <= gt.contact_eps) touching = true;
        }
        if (!touching) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("perfect estimate executes without unexpected contact") {
    const Desk& d = desk();
    const GroundTruth gt(d.jug, d.nominal);
    const Trajectory t = d.plan_to(d.nominal, 4);
    const ExecutionResult ex = step_execute(d.geometry, t, gt);
    CHECK(ex.completed);
    CHECK_FALSE(ex.contact.has_value());
    for (int f : d.grasp.required_fingers) CHECK(ex.closing_fingers.contains(f));
    // dense approach: successive configurations move at most about a centimetre
    for (std::size_t i = 1; i < ex.executed.size(); ++i) {
        REQUIRE(d.robot.workspace_displacement_bound(ex.executed[i - 1], ex.executed[i]) <= 0.01 + 1e-9);
    }
}

TEST_CASE("object raised into the approach triggers a contact") {
    const Desk& d = desk();
    const Trajectory t = d.plan_to(d.nominal, 4);
    // the hand comes down from above, so lifting the object puts it in the way
    const GroundTruth gt(d.jug, Pose6D::translation(Vec3(0.5, 0.0, 0.05)));
    const ExecutionResult ex = step_execute(d.geometry, t, gt);
    REQUIRE_FALSE(ex.completed);
    REQUIRE(ex.contact.has_value());
    CHECK(ex.contact->phase == Phase::Approach);
    CHECK_FALSE(ex.contact->links.empty());
    CHECK(ex.final_config == ex.contact->config);
    // the oracle agrees at the stop configuration, and not one step earlier
    const FkResult fk = fk_links(d.robot, ex.contact->config);
    for (int l : ex.contact->links) CHECK(d.geometry.clearance(fk, l, gt.cloud).d_obs <= gt.contact_eps);
    REQUIRE(ex.executed.size() >= 2);
    CHECK(touching_links(d.geometry, fk_links(d.robot, ex.executed[ex.executed.size() - 2]), gt).empty());
}

TEST_CASE("perfect estimate succeeds in one iteration for every strategy") {
    const Desk& d = desk();
    for (auto s : {Strategy::Prm, Strategy::Bsp, Strategy::Ir3ne}) {
        CAPTURE(to_string(s));
        const TrialRecord r = d.run(d.collapsed(d.nominal), d.nominal, s, 9);
        CHECK(r.success);
        CHECK(r.first_attempt_success);
        CHECK(r.iterations == 1);
        CHECK(r.kl_per_contact.empty());
        CHECK(required_fingers_touch(d, r.final_config, GroundTruth(d.jug, d.nominal)));
    }
}

TEST_CASE("PRM stops after one failed attempt") {
    const Desk& d = desk();
    // handle pulled 5 cm out from under the hand
    const Pose6D truth = Pose6D::from_axis_angle(Vec3::UnitZ(), 20.0 * kDeg, Vec3(0.45, 0.0, 0.0));
    const TrialRecord r = d.run(d.collapsed(d.nominal), truth, Strategy::Prm, 10);
    CHECK_FALSE(r.success);
    CHECK(r.iterations == 1);
}

TEST_CASE("PRM equals the first BSP iteration and records are consistent") {
    const Desk& d = desk();
    Rng rng(41);
    int contacts = 0;
    for (int trial = 0; trial < 6; ++trial) {
        CAPTURE(trial);
        const Pose6D truth = Pose6D::from_axis_angle(Vec3::UnitZ(), rng.uniform(-0.3, 0.3),
                                                     Vec3(0.5 + rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), 0.0));
        const BeliefState b = sample_kde(BeliefState({{d.nominal, 1.0}}, SE3Kernel{Vec3::Constant(0.02), 0.3}), 100,
                                         static_cast<std::uint64_t>(trial));
        const std::uint64_t seed = 100 + static_cast<std::uint64_t>(trial);
        const TrialRecord prm = d.run(b, truth, Strategy::Prm, seed);
        const TrialRecord bsp = d.run(b, truth, Strategy::Bsp, seed, 3);
        CHECK(prm.success == bsp.first_attempt_success);
        CHECK(prm.iterations == 1);
        const GroundTruth gt(d.jug, truth);
        for (const TrialRecord* r : {&prm, &bsp}) {
            if (r->success) CHECK(required_fingers_touch(d, r->final_config, gt));
            CHECK(r->iterations <= (r == &prm ? 1 : 3));
            for (double kl : r->kl_per_contact) {
                CHECK(std::isfinite(kl));
                CHECK(kl >= 0.0);
            }
            contacts += r->contacts;
        }
    }
    MESSAGE("approach contacts over the sweep: ", contacts);
}

TEST_CASE("episodes are reproducible") {
    const Desk& d = desk();
    const Pose6D truth = Pose6D::from_axis_angle(Vec3::UnitZ(), 0.2, Vec3(0.52, -0.02, 0.0));
    const BeliefState b = sample_kde(BeliefState({{d.nominal, 1.0}}, SE3Kernel{Vec3::Constant(0.02), 0.3}), 100, 5);
    const TrialRecord a = d.run(b, truth, Strategy::Ir3ne, 77, 3);
    const TrialRecord c = d.run(b, truth, Strategy::Ir3ne, 77, 3);
    CHECK(to_json(a).dump() == to_json(c).dump());
}

TEST_CASE("trial record JSON round trip") {
    TrialRecord r;
    r.seed = 123456789012345ULL;
    r.object = "jug";
    r.strategy = "IR3NE";
    r.views = 3;
    r.coverage = 0.4321;
    r.trial = 7;
    r.iterations = 4;
    r.success = true;
    r.kl_per_contact = {0.1, 0.0, 2.5e-7};
    r.contacts = 3;
    r.final_config = {0.1, -0.2};
    const nlohmann::json j = to_json(r);
    CHECK(j.dump() == to_json(trial_from_json(j)).dump());
    CHECK_FALSE(j.contains("wall_time"));
}

TEST_CASE("sim input validation") {
    const Desk& d = desk();
    CHECK(strategy_from_string("ir3ne") == Strategy::Ir3ne);
    CHECK(to_string(strategy_from_string("bsp")) == "BSP");
    CHECK_THROWS_AS(strategy_from_string("rrt"), InvalidArgument);
    CHECK_THROWS_AS(GroundTruth(d.jug, d.nominal, -1.0), InvalidArgument);

    GraspSpec g = d.grasp;
    g.closed_fingers[0] = 100.0;
    CHECK_THROWS_AS(g.validate(d.robot), InvalidArgument);
    g = d.grasp;
    g.required_fingers.insert(9);
    CHECK_THROWS_AS(g.validate(d.robot), InvalidArgument);

    EpisodeConfig cfg;
    cfg.max_iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = EpisodeConfig{};
    cfg.k_hypotheses = 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);

    Trajectory empty;
    CHECK_THROWS_AS(step_execute(d.geometry, empty, GroundTruth(d.jug, d.nominal)), InvalidArgument);
    CHECK_THROWS_AS(grasp_goal(d.robot, d.grasp, Pose6D::translation(Vec3(10, 0, 0)), d.grasp.ik_seed, IkOptions{}),
                    Unreachable);
}
