#include "hbgrasp/bench.hpp"
#include "hbgrasp/error.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

using namespace hbgrasp;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> views;
    std::optional<std::string> strategy;
    std::optional<double> eta, lambda, d_max;
    std::optional<std::string> aggregation;
    std::optional<double> alpha, beta, rho, sample_margin, tube, edge_step, clearance, de_weight, de_crossover;
    std::optional<int> n_nodes, n_local, node_growth, max_nodes, de_population, de_generations, closing_steps;
};

void add_common(CLI::App* app, std::string& scenario, Overrides& o) {
    app->add_option("--scenario", scenario, "Scenario file (JSON)");
    app->add_option("--seed", o.seed, "Master seed");
    app->add_option("--trials", o.trials, "Trials per cell");
    app->add_option("--views", o.views, "Number of visible views");
    app->add_option("--strategy", o.strategy, "prm, bsp or ir3ne");
    app->add_option("--eta", o.eta);
    app->add_option("--lambda", o.lambda);
    app->add_option("--d-max", o.d_max);
    app->add_option("--aggregation", o.aggregation, "product, sum or max");
    app->add_option("--alpha", o.alpha);
    app->add_option("--beta", o.beta);
    app->add_option("--rho", o.rho);
    app->add_option("--n-nodes", o.n_nodes);
    app->add_option("--n-local", o.n_local);
    app->add_option("--node-growth", o.node_growth);
    app->add_option("--max-nodes", o.max_nodes);
    app->add_option("--sample-margin", o.sample_margin);
    app->add_option("--tube", o.tube);
    app->add_option("--edge-step", o.edge_step);
    app->add_option("--clearance", o.clearance);
    app->add_option("--de-population", o.de_population);
    app->add_option("--de-weight", o.de_weight);
    app->add_option("--de-crossover", o.de_crossover);
    app->add_option("--de-generations", o.de_generations);
    app->add_option("--closing-steps", o.closing_steps);
}

Scenario builtin_scenario() {
    Scenario s;
    s.objects = {ObjectSpec{"jug", "jug", {}, {}, {}}, ObjectSpec{"lshape", "lshape", {}, {}, {}}};
    return s;
}

Scenario resolve(const std::string& path, const Overrides& o) {
    Scenario s = path.empty() ? builtin_scenario() : load_scenario(path);
    auto set = [](auto& dst, const auto& src) {
        if (src) dst = *src;
    };
    set(s.seed, o.seed);
    set(s.trials, o.trials);
    if (o.views) s.views = {*o.views};
    if (o.strategy) {
        try {
            s.strategies = {strategy_from_string(*o.strategy)};
        } catch (const Error& e) {
            throw ScenarioError(e.what());
        }
    }
    auto& t = s.episode.tactile;
    set(t.eta, o.eta);
    set(t.lambda, o.lambda);
    set(t.d_max, o.d_max);
    if (o.aggregation) {
        try {
            t.aggregation = aggregation_from_string(*o.aggregation);
        } catch (const Error& e) {
            throw ScenarioError(e.what());
        }
    }
    auto& w = s.episode.weights;
    set(w.alpha, o.alpha);
    set(w.beta, o.beta);
    set(w.rho, o.rho);
    set(w.n_nodes, o.n_nodes);
    set(w.n_local, o.n_local);
    set(w.node_growth, o.node_growth);
    set(w.max_nodes, o.max_nodes);
    set(w.sample_margin, o.sample_margin);
    set(w.tube, o.tube);
    set(w.edge_step, o.edge_step);
    set(w.clearance, o.clearance);
    set(w.de_population, o.de_population);
    set(w.de_weight, o.de_weight);
    set(w.de_crossover, o.de_crossover);
    set(w.de_generations, o.de_generations);
    set(w.closing_steps, o.closing_steps);
    s.validate();
    return s;
}

RobotModel robot_of(const Scenario& s) { return s.robot.empty() ? default_robot() : load_robot(s.robot); }

ClearanceOptions clearance_options() {
    ClearanceOptions c;
    c.exact_plane_offset = true;
    return c;
}

std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / name);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Belief-space reach-to-grasp planning benchmark"};
    app.require_subcommand(1);

    std::string scenario, out_dir = ".";
    int workers = 1, trial = 0;
    Overrides ov;

    std::string kind, out_file;
    std::vector<std::string> params;
    auto* mk = app.add_subcommand("make-object", "Write a synthetic object cloud");
    mk->add_option("kind", kind, "Object kind")->required();
    mk->add_option("-o,--out", out_file, "Output file (.ply or .csv)")->required();
    mk->add_option("--param", params, "Generator parameter key=value");

    auto* est = app.add_subcommand("estimate", "Fit the initial pose belief of one trial");
    auto* plan = app.add_subcommand("plan", "Plan the first approach of one trial to a CSV");
    auto* run = app.add_subcommand("run", "Run one episode");
    auto* bench = app.add_subcommand("bench", "Run the full trial matrix");
    for (auto* sc : {est, plan, run, bench}) {
        add_common(sc, scenario, ov);
        sc->add_option("--out-dir", out_dir, "Output directory");
    }
    for (auto* sc : {est, plan, run}) sc->add_option("--trial", trial, "Trial index");
    bench->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

    std::string log;
    auto* rep = app.add_subcommand("report", "Aggregate a trial log into CSV tables");
    rep->add_option("log", log, "trials.jsonl")->required();
    rep->add_option("--out-dir", out_dir, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (mk->parsed()) {
            ObjectParams p;
            for (const auto& kv : params) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw InvalidArgument("--param expects key=value, got '" + kv + "'");
                p[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
            }
            const PointCloudModel cloud = make_object(kind, p);
            if (std::filesystem::path(out_file).extension() == ".csv") {
                save_csv(cloud, out_file);
            } else {
                save_ply(cloud, out_file);
            }
            std::cout << cloud.size() << " points written to " << out_file << '\n';
            return 0;
        }
        if (rep->parsed()) {
            write_report(read_jsonl(log), out_dir);
            return 0;
        }

        const Scenario s = resolve(scenario, ov);
        if (bench->parsed()) {
            const auto records = run_bench(s, {workers, out_dir});
            for (const auto& c : summarize(records)) {
                std::cout << c.object << ' ' << c.strategy << " views=" << c.views << " iterations=" << c.iterations.mean
                          << " success=" << c.success.mean << " first=" << c.first_attempt.mean << " kl=" << c.kl.mean
                          << '\n';
            }
            return 0;
        }

        const RobotModel robot = robot_of(s);
        const RobotGeometry geometry(robot, clearance_options());
        const PreparedObject obj = prepare_object(s.objects.front(), robot);
        const int views = s.views.front();
        const TrialSetup setup = prepare_trial(s, obj, views, trial);

        if (est->parsed()) {
            auto out = open_out(out_dir, "belief.csv");
            write_belief_csv_header(out);
            write_belief_csv(out, 0, setup.initial);
            std::cout << "true pose " << setup.true_pose << "\nmle " << mle(setup.initial) << "\ncoverage "
                      << setup.coverage << '\n';
            return 0;
        }
        if (plan->parsed()) {
            const auto& g = obj.grasp;
            const HypothesisSet hyp = subsample_hypotheses(setup.initial, s.episode.k_hypotheses, derive_seed(setup.seed, 1));
            PlanContext ctx;
            ctx.geometry = &geometry;
            ctx.mle = PlacedCloud(obj.model, hyp.poses[0]);
            for (const auto& p : hyp.poses) ctx.hypotheses.emplace_back(obj.model, p);
            ctx.tactile = s.episode.tactile;
            ctx.weights = s.episode.weights;
            const Eigen::VectorXd goal = grasp_goal(robot, g, hyp.poses[0], g.ik_seed, s.episode.ik);
            Eigen::VectorXd closed = goal;
            closed.tail(robot.dof() - robot.arm_dof()) = g.closed_fingers;
            std::vector<Eigen::VectorXd> hyp_goals;
            for (const auto& p : hyp.poses) {
                try {
                    hyp_goals.push_back(grasp_goal(robot, g, p, goal, s.episode.ik));
                } catch (const Unreachable&) {
                }
            }
            Eigen::VectorXd start = g.ik_seed;
            start.tail(robot.dof() - robot.arm_dof()) = g.pregrasp_fingers;
            const Strategy st = s.strategies.front();
            const CostMode mode = st == Strategy::Ir3ne ? CostMode::Ir3ne : CostMode::Baseline;
            const Trajectory t = plan_reach(ctx, mode, start, GoalModel::build(goal, closed, hyp_goals), setup.seed);
            auto out = open_out(out_dir, "trajectory.csv");
            write_trajectory_csv(out, t);
            std::cout << t.waypoints.size() << " waypoints written to " << (std::filesystem::path(out_dir) / "trajectory.csv").string()
                      << '\n';
            return 0;
        }
        if (run->parsed()) {
            const GroundTruth gt(obj.model, setup.true_pose, s.contact_eps);
            TrialRecord r = run_episode(geometry, obj.model, setup.initial, obj.grasp, gt, s.strategies.front(), s.episode,
                                        setup.seed);
            r.object = obj.spec.name;
            r.views = views;
            r.coverage = setup.coverage;
            r.trial = trial;
            const std::string line = to_json(r).dump();
            open_out(out_dir, "trial.jsonl") << line << '\n';
            std::cout << line << '\n';
            return 0;
        }
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
