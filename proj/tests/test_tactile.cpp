#include "hbgrasp/belief.hpp"
#include "hbgrasp/error.hpp"
#include "hbgrasp/objects.hpp"
#include "hbgrasp/tactile.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace hbgrasp;
using namespace hbgrasp::test;

namespace {

ClearanceOptions exact() {
    ClearanceOptions c;
    c.exact_plane_offset = true;
    return c;
}

}  // namespace

TEST_CASE("phi values") {
    const TactileParams p;
    CHECK(phi_value(0.0, -1.0, p) == 1.0);
    CHECK(phi_value(0.0501, -1.0, p) == 0.0);
    CHECK(phi_value(0.05, -1.0, p) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(phi_value(0.0, 1.0, p) == 0.0);
    CHECK(phi_value(0.0, 0.0, p) == 0.0);
    double prev = 2.0;
    for (int i = 0; i <= 100; ++i) {
        const double v = phi_value(0.0005 * i, -0.3, p);
        CHECK(v <= prev);
        prev = v;
    }
    CHECK_THROWS_AS((TactileParams{0.0, 40.0, 0.05}.validate()), InvalidArgument);
    CHECK_THROWS_AS((TactileParams{1.0, -1.0, 0.05}.validate()), InvalidArgument);
    CHECK_THROWS_AS(aggregation_from_string("mean"), InvalidArgument);
    CHECK(aggregation_from_string(to_string(Aggregation::Max)) == Aggregation::Max);
}

TEST_CASE("phi from geometry") {
    const RobotGeometry g(robot_from_json_text(kOneFinger), exact());
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
    const TactileParams p;
    CHECK(phi(g, q, 0, PlacedCloud::world(plane_below(0.0)), p) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(phi(g, q, 0, PlacedCloud::world(plane_below(0.02)), p) == doctest::Approx(std::exp(-0.8)).epsilon(1e-9));
    CHECK(phi(g, q, 0, PlacedCloud::world(plane_below(0.08)), p) == 0.0);
    CHECK(phi(g, q, 0, PlacedCloud::world(plane_below(0.01, -1.0)), p) == 0.0);
    CHECK_THROWS_AS(phi(g, q, 1, PlacedCloud::world(plane_below(0.0)), p), InvalidArgument);
}

TEST_CASE("expected observation") {
    CHECK(aggregate({0.5, 0.5, 1.0}, Aggregation::Product) == doctest::Approx(0.25));
    CHECK(aggregate({0.5, 0.0, 1.0}, Aggregation::Product) == 0.0);
    CHECK(aggregate({0.5, 0.25}, Aggregation::Sum) == doctest::Approx(0.75));
    CHECK(aggregate({0.5, 0.25}, Aggregation::Max) == doctest::Approx(0.5));

    const RobotGeometry g(robot_from_json_text(kOneFinger), exact());
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
    const PlacedCloud hyp = PlacedCloud::world(plane_below(0.015));
    CHECK(expected_observation(g, q, hyp, TactileParams{}) == phi(g, q, 0, hyp, TactileParams{}));
}

TEST_CASE("expected observation ignores finger labels") {
    const RobotModel r = default_robot();
    auto doc = nlohmann::json::parse(default_robot_json());
    for (auto& l : doc["links"]) {
        if (l.contains("finger") && l["finger"] != 0) l["finger"] = 3 - l["finger"].get<int>();
    }
    const RobotModel swapped = robot_from_json_text(doc.dump());
    const RobotGeometry a(r, ClearanceOptions{}), b(swapped, ClearanceOptions{});
    const auto jug = std::make_shared<const PointCloudModel>(make_object("jug"));
    // finger joints follow finger order, so carry q across by link name
    auto same_pose = [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd out(q.size());
        for (const auto& l : r.links()) {
            if (l.dof_index >= 0) out[swapped.link(swapped.link_index(l.name)).dof_index] = q[l.dof_index];
        }
        return out;
    };
    Rng rng(71);
    int nonzero = 0;
    for (int i = 0; i < 300; ++i) {
        Eigen::VectorXd q(r.dof());
        for (int k = 0; k < r.dof(); ++k) q[k] = rng.uniform(r.lower()[k], r.upper()[k]);
        const FkResult fk = fk_links(r, q);
        const PlacedCloud hyp(jug, Pose6D::translation(fk.links[r.wrist_link()].position() + Vec3(0.08, 0, -0.1) +
                                                       random_vec(rng, 0.04)));
        for (auto agg : {Aggregation::Product, Aggregation::Sum, Aggregation::Max}) {
            TactileParams p;
            p.aggregation = agg;
            const double x = expected_observation(a, q, hyp, p), y = expected_observation(b, same_pose(q), hyp, p);
            REQUIRE(x == doctest::Approx(y).epsilon(1e-12));
            nonzero += agg == Aggregation::Max && x > 0.0;
        }
    }
    CHECK(nonzero > 10);
}

TEST_CASE("contact likelihood") {
    const RobotModel r = robot_from_json_text(kOneFinger);
    const RobotGeometry g(r, exact());
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
    const TactileParams p;
    const std::set<int> touched{r.link_index("tip")};
    CHECK(contact_likelihood(g, q, touched, PlacedCloud::world(plane_below(0.2)), p) == 0.0);
    CHECK(contact_likelihood(g, q, touched, PlacedCloud::world(plane_below(0.0)), p) == doctest::Approx(1.0));
    // no contact observed: 1 - phi
    CHECK(contact_likelihood(g, q, {}, PlacedCloud::world(plane_below(0.02)), p) ==
          doctest::Approx(1.0 - std::exp(-0.8)).epsilon(1e-9));
}

TEST_CASE("two-hypothesis Bayes update") {
    const RobotModel r = robot_from_json_text(kOneFinger);
    const RobotGeometry g(r, exact());
    const Eigen::VectorXd q = Eigen::VectorXd::Zero(2);
    const std::set<int> touched{r.link_index("tip")};
    // both hypotheses share one cloud; the second sits 25 mm further away
    const CloudPtr cloud = plane_below(0.005);
    const std::vector<Pose6D> hyp{Pose6D(), Pose6D::translation(Vec3(0, -0.025, 0))};
    std::vector<double> lik;
    for (const auto& h : hyp) lik.push_back(contact_likelihood(g, q, touched, PlacedCloud(cloud, h), TactileParams{}));
    CHECK(lik[0] == doctest::Approx(std::exp(-0.2)).epsilon(1e-9));
    CHECK(lik[1] == doctest::Approx(std::exp(-1.2)).epsilon(1e-9));
    const double want = std::exp(-0.2) / (std::exp(-0.2) + std::exp(-1.2));
    const BeliefState prior({{hyp[0], 1.0}, {hyp[1], 1.0}}, SE3Kernel{});
    const UpdateResult post = update(prior, lik, 20000, 3, Jitter{0.0, 0.0});
    double first = 0.0;
    for (const auto& pt : post.belief.particles()) first += pt.pose.position().y() > -0.01;
    CHECK(first / 20000.0 == doctest::Approx(want).epsilon(0.01));
}
