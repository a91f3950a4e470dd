#pragma once

#include "hbgrasp/contact.hpp"
#include "hbgrasp/tactile.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace hbgrasp {

enum class CostMode { Baseline, Ir3ne };

struct PlannerWeights {
    double alpha = 0.5;
    double beta = 0.5;
    double rho = 0.0;        // neighbour radius (rad); 0 picks it from the node count
    int n_nodes = 500;       // global roadmap, arm joints
    int n_local = 300;       // local roadmap, all joints
    int node_growth = 250;   // added when the roadmap has no path
    int max_nodes = 1500;
    double sample_margin = 0.6;  // rad around root and goals for global sampling
    double tube = 0.2;           // rad per joint around the global path
    double edge_step = 0.01;     // m of workspace motion between collision checks
    double clearance = 0.008;    // m the approach keeps from the estimated object
    int de_population = 30;
    double de_weight = 0.7;
    double de_crossover = 0.9;
    int de_generations = 100;
    int closing_steps = 20;

    void validate() const;
};

/// Goal for the MLE hypothesis plus the per-hypothesis goals whose spread
/// defines the Mahalanobis goal distance.
struct GoalModel {
    Eigen::VectorXd goal;    // pre-grasp configuration
    Eigen::VectorXd closed;  // goal with the fingers at the closing shape
    std::vector<Eigen::VectorXd> hypothesis_goals;
    Eigen::VectorXd a_diag;  // per-joint variance, floored

    static GoalModel build(const Eigen::VectorXd& goal, const Eigen::VectorXd& closed,
                           const std::vector<Eigen::VectorXd>& hypothesis_goals, double floor = 1e-4);
    [[nodiscard]] double mahalanobis(const Eigen::VectorXd& x) const;
};

struct Trajectory {
    std::vector<Eigen::VectorXd> waypoints;
    std::size_t approach_end = 0;  // index of the pre-grasp waypoint; closing follows

    [[nodiscard]] std::vector<Eigen::VectorXd> approach() const;
};

/// Graph of configurations with neighbour lists and lazily validated edges.
class Roadmap {
public:
    int add_node(const Eigen::VectorXd& q);
    /// Rebuild adjacency with every pair closer than rho.
    void connect(double rho);
    /// Radius giving an average degree of about `degree`.
    [[nodiscard]] double radius_for_degree(double degree) const;

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] const Eigen::VectorXd& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    [[nodiscard]] const std::vector<int>& neighbours(int i) const { return adj_[static_cast<std::size_t>(i)]; }
    [[nodiscard]] double rho() const { return rho_; }

    /// Cached edge validity; `check` runs only on the first query of an edge.
    bool edge_valid(int a, int b, const std::function<bool(int, int)>& check);

private:
    std::vector<Eigen::VectorXd> nodes_;
    std::vector<std::vector<int>> adj_;
    std::unordered_map<std::uint64_t, bool> edge_cache_;
    double rho_ = 0.0;
};

struct SearchResult {
    bool found = false;
    std::vector<int> path;
    double cost = 0.0;
    int expansions = 0;
};

using EdgeCost = std::function<double(int, int)>;
using Heuristic = std::function<double(int)>;
using EdgeCheck = std::function<bool(int, int)>;

/// A* from start to goal; closed nodes are reopened when a cheaper path
/// reaches them, so an admissible heuristic yields optimal costs.
SearchResult astar(Roadmap& g, int start, int goal, const EdgeCost& cost, const Heuristic& h, const EdgeCheck& check);

/// Everything the planner needs about the scene. hypotheses[0] is the MLE.
struct PlanContext {
    const RobotGeometry* geometry = nullptr;
    PlacedCloud mle;
    std::vector<PlacedCloud> hypotheses;
    TactileParams tactile;
    PlannerWeights weights;

    [[nodiscard]] const RobotModel& robot() const { return geometry->robot(); }
    [[nodiscard]] bool config_free(const Eigen::VectorXd& q) const;
    /// Dense check at edge_step workspace resolution, endpoints excluded.
    [[nodiscard]] bool segment_free(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
};

/// J = 1/(k-1) sum_i exp(-|g(q_to, p_i) - g(q_to, p_1)|).
double info_reward(const RobotGeometry& g, const Eigen::VectorXd& q_to, const std::vector<PlacedCloud>& hyps,
                   const TactileParams& p);

/// Edge cost of one step under a cost mode.
double edge_cost(const PlanContext& ctx, CostMode mode, const Eigen::VectorXd& from, const Eigen::VectorXd& to);
double heuristic(const PlanContext& ctx, CostMode mode, const GoalModel& goal, const Eigen::VectorXd& x);
double path_cost(const PlanContext& ctx, CostMode mode, const std::vector<Eigen::VectorXd>& path);
/// Sum of squared second differences.
double smoothness_penalty(const std::vector<Eigen::VectorXd>& path);

/// Global PRM search over the arm joints, hand joints interpolated by progress,
/// followed by the closing segment. Throws PlanningFailure.
Trajectory plan_global(const PlanContext& ctx, CostMode mode, const Eigen::VectorXd& root, const GoalModel& goal,
                       std::uint64_t seed);
Trajectory plan_baseline(const PlanContext& ctx, const Eigen::VectorXd& root, const GoalModel& goal, std::uint64_t seed);
Trajectory plan_ir3ne(const PlanContext& ctx, const Eigen::VectorXd& root, const GoalModel& goal, std::uint64_t seed);

/// Local roadmap in a tube around the approach, re-search, then differential
/// evolution smoothing. Returns the input when the result is not better.
Trajectory refine_hierarchical(const PlanContext& ctx, CostMode mode, const Trajectory& global, const GoalModel& goal,
                               std::uint64_t seed);

/// Differential evolution over the interior waypoints of a path.
std::vector<Eigen::VectorXd> de_smooth(const PlanContext& ctx, CostMode mode, const std::vector<Eigen::VectorXd>& path,
                                       double max_gap, std::uint64_t seed);

/// Global plan plus refinement.
Trajectory plan_reach(const PlanContext& ctx, CostMode mode, const Eigen::VectorXd& root, const GoalModel& goal,
                      std::uint64_t seed);

/// Closing segment from the pre-grasp to `closed` in `steps` steps.
void append_closing(Trajectory& t, const Eigen::VectorXd& closed, int steps);

/// CSV rows "step,q_0..q_{n-1},phase".
void write_trajectory_csv(std::ostream& os, const Trajectory& t);

CostMode cost_mode_from_string(const std::string& s);

}  // namespace hbgrasp
