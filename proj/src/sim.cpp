#include "hbgrasp/sim.hpp"

#include "hbgrasp/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace hbgrasp {

GroundTruth::GroundTruth(CloudPtr model, const Pose6D& pose, double eps)
    : true_pose(pose), cloud(std::move(model), pose), contact_eps(eps) {
    if (!(eps >= 0.0)) throw InvalidArgument("contact_eps must be >= 0");
}

void GraspSpec::validate(const RobotModel& r) const {
    const int nf = r.dof() - r.arm_dof();
    if (pregrasp_fingers.size() != nf || closed_fingers.size() != nf) {
        throw InvalidArgument("grasp finger shapes must cover every finger joint");
    }
    if (ik_seed.size() != r.dof()) throw InvalidArgument("grasp IK seed has wrong dimension");
    const auto lo = r.lower().tail(nf), hi = r.upper().tail(nf);
    if ((closed_fingers.array() < lo.array()).any() || (closed_fingers.array() > hi.array()).any()) {
        throw InvalidArgument("closed finger shape outside joint limits");
    }
    for (int f : required_fingers) {
        if (f < 0 || f >= r.finger_count()) throw InvalidArgument("required finger index out of range");
    }
}

std::set<int> touching_links(const RobotGeometry& g, const FkResult& fk, const GroundTruth& gt) {
    std::set<int> out;
    for (int l : g.robot().hand_bound_links()) {
        if (g.clearance(fk, l, gt.cloud).d_obs <= gt.contact_eps) out.insert(l);
    }
    return out;
}

namespace {

int dense_steps(const RobotModel& r, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double step) {
    return std::max(1, static_cast<int>(std::ceil(r.workspace_displacement_bound(a, b) / step)));
}

}  // namespace

ExecutionResult step_execute(const RobotGeometry& g, const Trajectory& traj, const GroundTruth& gt, double step) {
    const RobotModel& r = g.robot();
    if (traj.waypoints.empty() || traj.approach_end >= traj.waypoints.size()) throw InvalidArgument("step_execute: empty trajectory");
    ExecutionResult res;
    const auto& wp = traj.waypoints;

    auto check = [&](const Eigen::VectorXd& q, int idx) -> bool {
        const auto links = touching_links(g, fk_links(r, q), gt);
        if (links.empty()) return false;
        res.contact = ContactEvent{idx, links, q, Phase::Approach};
        return true;
    };
    int idx = 0;
    res.executed.push_back(wp[0]);
    if (check(wp[0], idx)) {
        res.final_config = wp[0];
        return res;
    }
    for (std::size_t i = 1; i <= traj.approach_end; ++i) {
        const int n = dense_steps(r, wp[i - 1], wp[i], step);
        for (int s = 1; s <= n; ++s) {
            const Eigen::VectorXd q = wp[i - 1] + (wp[i] - wp[i - 1]) * (static_cast<double>(s) / n);
            res.executed.push_back(q);
            if (check(q, ++idx)) {
                res.final_config = q;
                return res;
            }
        }
    }
    res.completed = true;

    // Guarded closing: each finger stops at its first contact.
    Eigen::VectorXd q = wp[traj.approach_end];
    std::vector<bool> frozen(static_cast<std::size_t>(r.finger_count()), false);
    std::vector<std::vector<int>> finger_joints(static_cast<std::size_t>(r.finger_count()));
    for (int f = 0; f < r.finger_count(); ++f) {
        for (int l : r.finger_links(f)) {
            if (r.link(l).dof_index >= 0) finger_joints[static_cast<std::size_t>(f)].push_back(r.link(l).dof_index);
        }
    }
    auto finger_touching = [&](const FkResult& fk, int f) {
        for (int l : r.finger_links(f)) {
            if (r.link(l).bound && g.clearance(fk, l, gt.cloud).d_obs <= gt.contact_eps) return true;
        }
        return false;
    };
    {
        const FkResult fk = fk_links(r, q);
        for (int f = 0; f < r.finger_count(); ++f) frozen[static_cast<std::size_t>(f)] = finger_touching(fk, f);
    }
    for (std::size_t i = traj.approach_end + 1; i < wp.size(); ++i) {
        const int n = dense_steps(r, wp[i - 1], wp[i], step);
        for (int s = 1; s <= n; ++s) {
            const Eigen::VectorXd target = wp[i - 1] + (wp[i] - wp[i - 1]) * (static_cast<double>(s) / n);
            Eigen::VectorXd next = q;
            for (int f = 0; f < r.finger_count(); ++f) {
                if (frozen[static_cast<std::size_t>(f)]) continue;
                for (int j : finger_joints[static_cast<std::size_t>(f)]) next[j] = target[j];
            }
            // Arm joints follow the trajectory as well.
            next.head(r.arm_dof()) = target.head(r.arm_dof());
            q = next;
            const FkResult fk = fk_links(r, q);
            for (int f = 0; f < r.finger_count(); ++f) {
                if (!frozen[static_cast<std::size_t>(f)] && finger_touching(fk, f)) frozen[static_cast<std::size_t>(f)] = true;
            }
        }
    }
    res.final_config = q;
    const FkResult fk = fk_links(r, q);
    res.closing_links = touching_links(g, fk, gt);
    for (int f = 0; f < r.finger_count(); ++f) {
        if (finger_touching(fk, f)) res.closing_fingers.insert(f);
    }
    return res;
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "prm" || s == "PRM") return Strategy::Prm;
    if (s == "bsp" || s == "BSP") return Strategy::Bsp;
    if (s == "ir3ne" || s == "IR3NE" || s == "IR3ne") return Strategy::Ir3ne;
    throw InvalidArgument("unknown strategy '" + s + "' (expected prm, bsp or ir3ne)");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Prm: return "PRM";
        case Strategy::Bsp: return "BSP";
        case Strategy::Ir3ne: return "IR3NE";
    }
    return "PRM";
}

void EpisodeConfig::validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (k_hypotheses < 2) throw InvalidArgument("k must be >= 2");
    if (particles < 1) throw InvalidArgument("particle count must be >= 1");
    if (!(retreat >= 0.0)) throw InvalidArgument("retreat must be >= 0");
    jitter.validate();
    tactile.validate();
    weights.validate();
}

nlohmann::json to_json(const TrialRecord& r) {
    return nlohmann::json{{"seed", r.seed},
                          {"object", r.object},
                          {"strategy", r.strategy},
                          {"views", r.views},
                          {"coverage", r.coverage},
                          {"trial", r.trial},
                          {"iterations", r.iterations},
                          {"success", r.success},
                          {"first_attempt_success", r.first_attempt_success},
                          {"kl_per_contact", r.kl_per_contact},
                          {"contacts", r.contacts},
                          {"planning_failures", r.planning_failures},
                          {"degenerate_updates", r.degenerate_updates},
                          {"kl_clamped", r.kl_clamped},
                          {"final_config", r.final_config}};
}

TrialRecord trial_from_json(const nlohmann::json& j) {
    TrialRecord r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.object = j.at("object").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.views = j.at("views").get<int>();
    r.coverage = j.at("coverage").get<double>();
    r.trial = j.value("trial", 0);
    r.iterations = j.at("iterations").get<int>();
    r.success = j.at("success").get<bool>();
    r.first_attempt_success = j.at("first_attempt_success").get<bool>();
    r.kl_per_contact = j.at("kl_per_contact").get<std::vector<double>>();
    r.contacts = j.value("contacts", 0);
    r.planning_failures = j.value("planning_failures", 0);
    r.degenerate_updates = j.value("degenerate_updates", 0);
    r.kl_clamped = j.value("kl_clamped", false);
    r.final_config = j.value("final_config", std::vector<double>{});
    return r;
}

Eigen::VectorXd grasp_goal(const RobotModel& r, const GraspSpec& grasp, const Pose6D& object_pose,
                           const Eigen::VectorXd& seed, const IkOptions& ik) {
    const Pose6D wrist = compose(object_pose, grasp.wrist_in_object);
    const IkResult res = ik_goal(r, wrist, grasp.pregrasp_fingers, r.make_config(seed), ik);
    if (!res.converged) throw Unreachable("grasp goal: IK did not reach the tolerance");
    return res.config.q;
}

namespace {

/// Walk back along the executed history by at least `distance` of workspace
/// motion, then further until the configuration is clear of the estimate.
Eigen::VectorXd retreat_point(const RobotModel& r, const std::vector<Eigen::VectorXd>& history, double distance,
                              const PlanContext* ctx) {
    if (history.empty()) throw InvalidArgument("retreat: empty history");
    std::size_t i = history.size() - 1;
    double moved = 0.0;
    while (i > 0 && moved < distance) {
        moved += r.workspace_displacement_bound(history[i], history[i - 1]);
        --i;
    }
    if (ctx != nullptr) {
        while (i > 0 && !ctx->config_free(history[i])) --i;
    }
    return history[i];
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TrialRecord run_episode(const RobotGeometry& g, const CloudPtr& model, const BeliefState& initial, const GraspSpec& grasp,
                        const GroundTruth& gt, Strategy strategy, const EpisodeConfig& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    const RobotModel& r = g.robot();
    grasp.validate(r);

    TrialRecord rec;
    rec.seed = seed;
    rec.strategy = to_string(strategy);
    const CostMode mode = strategy == Strategy::Ir3ne ? CostMode::Ir3ne : CostMode::Baseline;
    const int max_iter = strategy == Strategy::Prm ? 1 : cfg.max_iterations;

    BeliefState belief = initial;
    Eigen::VectorXd q_cur = grasp.ik_seed;
    q_cur.tail(r.dof() - r.arm_dof()) = grasp.pregrasp_fingers;
    // Dense history of executed approach configurations, the start included.
    std::vector<Eigen::VectorXd> history{q_cur};

    auto likelihoods = [&](const Eigen::VectorXd& q, const std::set<int>& links) {
        std::set<int> observed = links;
        if (!cfg.link_attribution && !links.empty()) observed = {r.hand_bound_links().begin(), r.hand_bound_links().end()};
        std::vector<double> lik;
        lik.reserve(belief.size());
        for (const auto& p : belief.particles()) {
            lik.push_back(contact_likelihood(g, q, observed, PlacedCloud(model, p.pose), cfg.tactile));
        }
        return lik;
    };

    for (int it = 1; it <= max_iter; ++it) {
        rec.iterations = it;
        const std::uint64_t it_seed = derive_seed(seed, static_cast<std::uint64_t>(it));
        const HypothesisSet hyp = subsample_hypotheses(belief, cfg.k_hypotheses, derive_seed(it_seed, 1));

        PlanContext ctx;
        ctx.geometry = &g;
        ctx.mle = PlacedCloud(model, hyp.poses[0]);
        for (const auto& p : hyp.poses) ctx.hypotheses.emplace_back(model, p);
        ctx.tactile = cfg.tactile;
        ctx.weights = cfg.weights;

        Trajectory traj;
        bool planned = false;
        try {
            if (!ctx.config_free(q_cur)) q_cur = retreat_point(r, history, 0.0, &ctx);
            const Eigen::VectorXd goal = grasp_goal(r, grasp, hyp.poses[0], grasp.ik_seed, cfg.ik);
            Eigen::VectorXd closed = goal;
            closed.tail(r.dof() - r.arm_dof()) = grasp.closed_fingers;
            std::vector<Eigen::VectorXd> hyp_goals;
            if (mode == CostMode::Ir3ne) {
                for (const auto& p : hyp.poses) {
                    try {
                        hyp_goals.push_back(grasp_goal(r, grasp, p, goal, cfg.ik));
                    } catch (const Unreachable&) {
                        // hypotheses without a reachable grasp do not shape the goal metric
                    }
                }
            }
            const GoalModel gm = GoalModel::build(goal, closed, hyp_goals);
            traj = plan_reach(ctx, mode, q_cur, gm, derive_seed(it_seed, 2));
            planned = true;
        } catch (const Unreachable&) {
        } catch (const PlanningFailure&) {
        }

        if (!planned) {
            ++rec.planning_failures;
            // Spread the belief so the next iteration sees different hypotheses.
            const auto res = update(belief, std::vector<double>(belief.size(), 1.0), cfg.particles, derive_seed(it_seed, 3),
                                    cfg.jitter);
            belief = res.belief;
            continue;
        }

        const ExecutionResult ex = step_execute(g, traj, gt);
        for (std::size_t i = 1; i < ex.executed.size(); ++i) history.push_back(ex.executed[i]);
        rec.final_config = to_vector(ex.final_config);

        if (!ex.completed) {
            ++rec.contacts;
            const BeliefState pre = belief;
            const auto res = update(belief, likelihoods(ex.contact->config, ex.contact->links), cfg.particles,
                                    derive_seed(it_seed, 4), cfg.jitter);
            belief = res.belief;
            if (res.degenerate) ++rec.degenerate_updates;
            const KlResult kl = kl_divergence(belief, pre, hyp);
            rec.kl_per_contact.push_back(kl.value);
            rec.kl_clamped = rec.kl_clamped || kl.clamped;
            q_cur = retreat_point(r, history, cfg.retreat, nullptr);
            history.push_back(q_cur);
            continue;
        }

        const bool grasped = std::all_of(grasp.required_fingers.begin(), grasp.required_fingers.end(),
                                         [&](int f) { return ex.closing_fingers.contains(f); });
        if (grasped) {
            rec.success = true;
            rec.first_attempt_success = it == 1;
            break;
        }
        // Missing contacts at the end of closing are an observation too.
        const auto res = update(belief, likelihoods(ex.final_config, ex.closing_links), cfg.particles,
                                derive_seed(it_seed, 5), cfg.jitter);
        belief = res.belief;
        if (res.degenerate) ++rec.degenerate_updates;
        q_cur = retreat_point(r, history, cfg.retreat, nullptr);
        history.push_back(q_cur);
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

}  // namespace hbgrasp
