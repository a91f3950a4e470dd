#pragma once

#include "hbgrasp/objects.hpp"
#include "hbgrasp/sim.hpp"
#include "hbgrasp/surflet.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hbgrasp {

inline constexpr int kScenarioVersion = 1;

struct ObjectSpec {
    std::string name;       // label used in logs and tables
    std::string kind;       // built-in generator, empty when ply is set
    ObjectParams params;
    std::string ply;        // model cloud file, model frame = file frame
    std::optional<GraspSpec> grasp;  // defaults to default_grasp(kind)
};

struct OffsetSpec {
    double position = 0.05;                          // m, uniform per horizontal axis
    double yaw = 30.0 * 3.14159265358979323846 / 180.0;  // rad, uniform
    bool symmetry_trap = false;                      // adds a 180 deg yaw flip to half the trials
};

struct Scenario {
    int version = kScenarioVersion;
    std::vector<ObjectSpec> objects;
    Vec3 nominal_position = Vec3(0.5, 0.0, 0.0);
    OffsetSpec offsets;
    double max_fit_tilt = 30.0 * 3.14159265358979323846 / 180.0;  // fits tilted further from upright are dropped
    std::vector<int> views{1, 3, 5, 7};
    int view_count = 7;
    std::size_t n_fits = 5;
    std::size_t n_features = 1000;
    SE3Kernel kernel{Vec3::Constant(0.02), 25.0 * 3.14159265358979323846 / 180.0};  // spreads the N fits over K particles
    std::vector<Strategy> strategies{Strategy::Prm, Strategy::Bsp, Strategy::Ir3ne};
    int trials = 50;
    std::uint64_t seed = 1;
    std::string robot;          // robot file; empty selects the built-in robot
    bool perfect_estimate = false;  // initial belief collapsed on the true pose
    double contact_eps = 0.003;
    EpisodeConfig episode;

    void validate() const;
};

/// Throws ScenarioError on any malformed or out-of-range field.
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const Scenario& s);

/// Built-in grasp for a generator kind on the given robot.
GraspSpec default_grasp(const std::string& kind, const RobotModel& r);

/// Everything an episode needs that does not depend on the strategy.
struct TrialSetup {
    std::uint64_t seed = 0;
    Pose6D true_pose;
    ViewMask mask;
    double coverage = 0.0;  // retained fraction of the model
    BeliefState initial;
};

/// Sub-seed of one trial; the strategy is part of the signature but every
/// strategy receives the same trial so outcomes are paired.
std::uint64_t trial_seed(std::uint64_t master, const std::string& object, Strategy strategy, int views, int trial);

/// Object models and registration tables for one scenario.
struct PreparedObject {
    ObjectSpec spec;
    CloudPtr model;
    std::shared_ptr<const SurfletModel> surflets;
    GraspSpec grasp;
};

PreparedObject prepare_object(const ObjectSpec& spec, const RobotModel& r);

/// True pose, masked query, N fits and the K-particle initial belief.
TrialSetup prepare_trial(const Scenario& s, const PreparedObject& obj, int views, int trial);

struct BenchOptions {
    int workers = 1;
    std::filesystem::path out_dir;  // empty: nothing written
};

/// Runs every (object, views, trial, strategy) episode. Records come back in
/// canonical order regardless of the worker count.
std::vector<TrialRecord> run_bench(const Scenario& s, const BenchOptions& opt = {});

/// One JSON object per line, fixed key order.
void write_jsonl(const std::vector<TrialRecord>& records, const std::filesystem::path& path);
std::vector<TrialRecord> read_jsonl(const std::filesystem::path& path);

struct CellStats {
    double mean = 0.0;
    double std = 0.0;  // population
    std::size_t n = 0;
};

struct CellSummary {
    std::string object;
    std::string strategy;
    int views = 0;
    double coverage_pct = 0.0;  // mean retained fraction, percent
    CellStats iterations;
    CellStats kl;  // over all contacts of the cell
    CellStats success;
    CellStats first_attempt;
};

/// Cells keyed by (object, strategy, views) in first-seen order.
std::vector<CellSummary> summarize(const std::vector<TrialRecord>& records);

/// iterations.csv, kl.csv, success.csv and first_attempt.csv. Throws on an empty log.
void write_report(const std::vector<TrialRecord>& records, const std::filesystem::path& out_dir);

}  // namespace hbgrasp
