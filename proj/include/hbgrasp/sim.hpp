#pragma once

#include "hbgrasp/belief.hpp"
#include "hbgrasp/planner.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hbgrasp {

/// The hidden object placement; only the contact oracle reads it.
struct GroundTruth {
    Pose6D true_pose;
    PlacedCloud cloud;
    double contact_eps = 0.003;

    GroundTruth(CloudPtr model, const Pose6D& pose, double eps = 0.003);
};

/// A grasp expressed against the object model frame.
struct GraspSpec {
    Pose6D wrist_in_object;
    Eigen::VectorXd pregrasp_fingers;  // finger joints only, configuration order
    Eigen::VectorXd closed_fingers;
    std::set<int> required_fingers;
    Eigen::VectorXd ik_seed;  // home configuration: episode start and goal IK seed

    void validate(const RobotModel& r) const;
};

enum class Phase { Approach, Closing };

struct ContactEvent {
    int step = 0;              // dense step index within the phase
    std::set<int> links;       // hand links within contact_eps
    Eigen::VectorXd config;
    Phase phase = Phase::Approach;
};

struct ExecutionResult {
    bool completed = false;                  // approach finished without unexpected contact
    std::optional<ContactEvent> contact;     // the unexpected approach contact
    std::vector<Eigen::VectorXd> executed;   // dense approach configurations actually reached
    Eigen::VectorXd final_config;
    std::set<int> closing_links;             // links touching at the end of closing
    std::set<int> closing_fingers;           // fingers touching at the end of closing
};

/// Executes an approach at dense resolution, stopping at the first hand-link
/// contact with the true object, then closes the fingers with each finger
/// stopping at its own first contact.
ExecutionResult step_execute(const RobotGeometry& g, const Trajectory& traj, const GroundTruth& gt, double step = 0.01);

/// Hand links whose clearance to the true object is within contact_eps.
std::set<int> touching_links(const RobotGeometry& g, const FkResult& fk, const GroundTruth& gt);

enum class Strategy { Prm, Bsp, Ir3ne };
Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

struct EpisodeConfig {
    int max_iterations = 10;
    std::size_t k_hypotheses = 5;
    std::size_t particles = 100;
    double retreat = 0.05;  // m of workspace motion backed off after a contact
    bool link_attribution = true;  // false reports every hand link on contact
    Jitter jitter;
    TactileParams tactile;
    PlannerWeights weights;
    IkOptions ik;

    void validate() const;
};

struct TrialRecord {
    std::uint64_t seed = 0;
    std::string object;
    std::string strategy;
    int views = 0;
    double coverage = 0.0;
    int trial = 0;
    int iterations = 0;
    bool success = false;
    bool first_attempt_success = false;
    std::vector<double> kl_per_contact;
    int contacts = 0;
    int planning_failures = 0;
    int degenerate_updates = 0;
    bool kl_clamped = false;
    std::vector<double> final_config;
    double wall_time = 0.0;  // seconds; kept out of the JSON line
};

nlohmann::json to_json(const TrialRecord& r);
TrialRecord trial_from_json(const nlohmann::json& j);

/// Belief-space re-planning loop of one grasp attempt sequence.
TrialRecord run_episode(const RobotGeometry& g, const CloudPtr& model, const BeliefState& initial, const GraspSpec& grasp,
                        const GroundTruth& gt, Strategy strategy, const EpisodeConfig& cfg, std::uint64_t seed);

/// Goal configurations for a grasp on an object at `object_pose`.
/// Throws Unreachable when IK fails.
Eigen::VectorXd grasp_goal(const RobotModel& r, const GraspSpec& grasp, const Pose6D& object_pose,
                           const Eigen::VectorXd& seed, const IkOptions& ik);

}  // namespace hbgrasp
