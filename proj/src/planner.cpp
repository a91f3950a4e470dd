#include "hbgrasp/planner.hpp"

#include "hbgrasp/error.hpp"
#include "hbgrasp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <queue>

namespace hbgrasp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t edge_key(int a, int b) {
    const auto lo = static_cast<std::uint32_t>(std::min(a, b));
    const auto hi = static_cast<std::uint32_t>(std::max(a, b));
    return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

double max_gap(const std::vector<Eigen::VectorXd>& path) {
    double g = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) g = std::max(g, (path[i] - path[i - 1]).norm());
    return g;
}

}  // namespace

void PlannerWeights::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0)) {
        throw InvalidArgument("alpha and beta must lie in [0, 1]");
    }
    if (!(alpha + beta > 0.0)) throw InvalidArgument("alpha + beta must be > 0");
    if (rho < 0.0) throw InvalidArgument("rho must be >= 0");
    if (n_nodes < 2 || n_local < 0 || node_growth < 1 || max_nodes < n_nodes) {
        throw InvalidArgument("invalid roadmap node counts");
    }
    if (!(sample_margin >= 0.0) || !(tube > 0.0) || !(edge_step > 0.0) || !(clearance >= 0.0)) {
        throw InvalidArgument("invalid roadmap sampling parameters");
    }
    if (de_population < 4 || de_generations < 0 || !(de_weight > 0.0) || !(de_crossover >= 0.0 && de_crossover <= 1.0)) {
        throw InvalidArgument("invalid differential evolution parameters");
    }
    if (closing_steps < 1) throw InvalidArgument("closing_steps must be >= 1");
}

GoalModel GoalModel::build(const Eigen::VectorXd& goal, const Eigen::VectorXd& closed,
                           const std::vector<Eigen::VectorXd>& hypothesis_goals, double floor) {
    GoalModel m;
    m.goal = goal;
    m.closed = closed;
    m.hypothesis_goals = hypothesis_goals;
    m.a_diag = Eigen::VectorXd::Constant(goal.size(), floor);
    if (hypothesis_goals.size() >= 2) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(goal.size());
        for (const auto& g : hypothesis_goals) mean += g;
        mean /= static_cast<double>(hypothesis_goals.size());
        Eigen::VectorXd var = Eigen::VectorXd::Zero(goal.size());
        for (const auto& g : hypothesis_goals) var += (g - mean).cwiseAbs2();
        var /= static_cast<double>(hypothesis_goals.size());
        m.a_diag = var.cwiseMax(floor);
    }
    return m;
}

double GoalModel::mahalanobis(const Eigen::VectorXd& x) const {
    return std::sqrt(((x - goal).cwiseAbs2().array() / a_diag.array()).sum());
}

std::vector<Eigen::VectorXd> Trajectory::approach() const {
    if (waypoints.empty()) return {};
    return {waypoints.begin(), waypoints.begin() + static_cast<std::ptrdiff_t>(approach_end + 1)};
}

int Roadmap::add_node(const Eigen::VectorXd& q) {
    nodes_.push_back(q);
    adj_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

void Roadmap::connect(double rho) {
    rho_ = rho;
    for (auto& a : adj_) a.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        for (std::size_t j = i + 1; j < nodes_.size(); ++j) {
            if ((nodes_[i] - nodes_[j]).norm() <= rho) {
                adj_[i].push_back(static_cast<int>(j));
                adj_[j].push_back(static_cast<int>(i));
            }
        }
    }
}

double Roadmap::radius_for_degree(double degree) const {
    const std::size_t n = nodes_.size();
    if (n < 2) return 0.0;
    std::vector<double> d;
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) d.push_back((nodes_[i] - nodes_[j]).norm());
    }
    // degree * n / 2 undirected edges give the requested average degree
    const auto k = std::min(d.size() - 1, static_cast<std::size_t>(std::max(1.0, degree * static_cast<double>(n) / 2.0)) - 1);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    return d[k];
}

bool Roadmap::edge_valid(int a, int b, const std::function<bool(int, int)>& check) {
    const auto key = edge_key(a, b);
    const auto it = edge_cache_.find(key);
    if (it != edge_cache_.end()) return it->second;
    const bool ok = check(a, b);
    edge_cache_.emplace(key, ok);
    return ok;
}

SearchResult astar(Roadmap& g, int start, int goal, const EdgeCost& cost, const Heuristic& h, const EdgeCheck& check) {
    SearchResult res;
    const std::size_t n = g.size();
    std::vector<double> best(n, kInf);
    std::vector<int> parent(n, -1);
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    best[static_cast<std::size_t>(start)] = 0.0;
    open.emplace(h(start), start);
    std::vector<double> f_pushed(n, kInf);
    f_pushed[static_cast<std::size_t>(start)] = h(start);
    while (!open.empty()) {
        const auto [f, u] = open.top();
        open.pop();
        if (f > f_pushed[static_cast<std::size_t>(u)]) continue;  // stale entry
        ++res.expansions;
        if (u == goal) break;
        const double gu = best[static_cast<std::size_t>(u)];
        for (int v : g.neighbours(u)) {
            const double c = gu + cost(u, v);
            if (!(c < best[static_cast<std::size_t>(v)])) continue;
            if (!g.edge_valid(u, v, check)) continue;
            best[static_cast<std::size_t>(v)] = c;
            parent[static_cast<std::size_t>(v)] = u;
            const double fv = c + h(v);
            f_pushed[static_cast<std::size_t>(v)] = fv;
            open.emplace(fv, v);
        }
    }
    if (!std::isfinite(best[static_cast<std::size_t>(goal)])) return res;
    res.found = true;
    res.cost = best[static_cast<std::size_t>(goal)];
    for (int v = goal; v >= 0; v = parent[static_cast<std::size_t>(v)]) res.path.push_back(v);
    std::reverse(res.path.begin(), res.path.end());
    return res;
}

bool PlanContext::config_free(const Eigen::VectorXd& q) const {
    return !config_in_collision(*geometry, q, mle, -weights.clearance);
}

bool PlanContext::segment_free(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    const double bound = robot().workspace_displacement_bound(a, b);
    const int steps = static_cast<int>(std::ceil(bound / weights.edge_step));
    for (int i = 1; i < steps; ++i) {
        if (!config_free(a + (b - a) * (static_cast<double>(i) / steps))) return false;
    }
    return true;
}

double info_reward(const RobotGeometry& g, const Eigen::VectorXd& q_to, const std::vector<PlacedCloud>& hyps,
                   const TactileParams& p) {
    if (hyps.size() < 2) throw InvalidArgument("info_reward: need at least 2 hypotheses");
    const FkResult fk = fk_links(g.robot(), q_to);
    const double g1 = expected_observation(g, fk, hyps[0], p);
    double s = 0.0;
    for (std::size_t i = 1; i < hyps.size(); ++i) s += std::exp(-std::abs(expected_observation(g, fk, hyps[i], p) - g1));
    return s / static_cast<double>(hyps.size() - 1);
}

double edge_cost(const PlanContext& ctx, CostMode mode, const Eigen::VectorXd& from, const Eigen::VectorXd& to) {
    const double d = (to - from).norm();
    if (mode == CostMode::Baseline) return ctx.weights.alpha * d;
    return ctx.weights.alpha * info_reward(*ctx.geometry, to, ctx.hypotheses, ctx.tactile) * d;
}

double heuristic(const PlanContext& ctx, CostMode mode, const GoalModel& goal, const Eigen::VectorXd& x) {
    if (mode == CostMode::Baseline) return ctx.weights.beta * (x - goal.goal).norm();
    return ctx.weights.beta * goal.mahalanobis(x);
}

double path_cost(const PlanContext& ctx, CostMode mode, const std::vector<Eigen::VectorXd>& path) {
    double c = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) c += edge_cost(ctx, mode, path[i - 1], path[i]);
    return c;
}

double smoothness_penalty(const std::vector<Eigen::VectorXd>& path) {
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < path.size(); ++i) s += (path[i + 1] - 2.0 * path[i] + path[i - 1]).squaredNorm();
    return s;
}

namespace {

/// Search a roadmap whose node 0 is the root and `goal_node` the goal.
SearchResult search(const PlanContext& ctx, CostMode mode, Roadmap& g, int goal_node, const GoalModel& goal) {
    std::vector<double> reward(g.size(), -1.0);
    const EdgeCost cost = [&](int a, int b) {
        const double d = (g.node(b) - g.node(a)).norm();
        if (mode == CostMode::Baseline) return ctx.weights.alpha * d;
        double& j = reward[static_cast<std::size_t>(b)];
        if (j < 0.0) j = info_reward(*ctx.geometry, g.node(b), ctx.hypotheses, ctx.tactile);
        return ctx.weights.alpha * j * d;
    };
    const Heuristic h = [&](int v) { return heuristic(ctx, mode, goal, g.node(v)); };
    const EdgeCheck check = [&](int a, int b) { return ctx.segment_free(g.node(a), g.node(b)); };
    return astar(g, 0, goal_node, cost, h, check);
}

void check_inputs(const PlanContext& ctx, CostMode mode, const Eigen::VectorXd& root, const GoalModel& goal) {
    if (ctx.geometry == nullptr || !ctx.mle.model) throw InvalidArgument("plan: incomplete context");
    ctx.weights.validate();
    const int n = ctx.robot().dof();
    if (root.size() != n || goal.goal.size() != n || goal.closed.size() != n) {
        throw InvalidArgument("plan: configuration dimension mismatch");
    }
    if (mode == CostMode::Ir3ne && ctx.hypotheses.size() < 2) throw InvalidArgument("plan: IR3ne needs k >= 2");
}

}  // namespace

Trajectory plan_global(const PlanContext& ctx, CostMode mode, const Eigen::VectorXd& root, const GoalModel& goal,
                       std::uint64_t seed) {
    check_inputs(ctx, mode, root, goal);
    const RobotModel& r = ctx.robot();
    const PlannerWeights& w = ctx.weights;
    Trajectory t;
    if ((root - goal.goal).norm() < 1e-12) {
        t.waypoints.push_back(root);
        t.approach_end = 0;
        append_closing(t, goal.closed, w.closing_steps);
        return t;
    }

    const int na = r.arm_dof();
    Eigen::VectorXd lo = root.head(na).cwiseMin(goal.goal.head(na));
    Eigen::VectorXd hi = root.head(na).cwiseMax(goal.goal.head(na));
    for (const auto& hg : goal.hypothesis_goals) {
        lo = lo.cwiseMin(hg.head(na));
        hi = hi.cwiseMax(hg.head(na));
    }
    lo = (lo.array() - w.sample_margin).matrix().cwiseMax(r.lower().head(na));
    hi = (hi.array() + w.sample_margin).matrix().cwiseMin(r.upper().head(na));

    const Eigen::VectorXd dir = goal.goal.head(na) - root.head(na);
    const double dir2 = dir.squaredNorm();
    auto with_hand = [&](const Eigen::VectorXd& arm) {
        const double s = dir2 > 0.0 ? std::clamp((arm - root.head(na)).dot(dir) / dir2, 0.0, 1.0) : 1.0;
        Eigen::VectorXd q = root + s * (goal.goal - root);
        q.head(na) = arm;
        return q;
    };

    Roadmap g;
    g.add_node(root);
    const int goal_node = g.add_node(goal.goal);
    Rng rng(seed);
    int target = w.n_nodes;
    while (true) {
        const int attempts_max = 20 * target;
        for (int attempts = 0; static_cast<int>(g.size()) < target && attempts < attempts_max; ++attempts) {
            Eigen::VectorXd arm(na);
            for (int i = 0; i < na; ++i) arm[i] = rng.uniform(lo[i], hi[i]);
            const Eigen::VectorXd q = with_hand(arm);
            if (ctx.config_free(q)) g.add_node(q);
        }
        g.connect(w.rho > 0.0 ? w.rho : g.radius_for_degree(10.0));
        const SearchResult res = search(ctx, mode, g, goal_node, goal);
        if (res.found) {
            for (int v : res.path) t.waypoints.push_back(g.node(v));
            t.approach_end = t.waypoints.size() - 1;
            append_closing(t, goal.closed, w.closing_steps);
            return t;
        }
        if (target >= w.max_nodes) break;
        target = std::min(w.max_nodes, target + w.node_growth);
    }
    throw PlanningFailure("no collision-free path within the roadmap node budget");
}

Trajectory plan_baseline(const PlanContext& ctx, const Eigen::VectorXd& root, const GoalModel& goal, std::uint64_t seed) {
    return plan_global(ctx, CostMode::Baseline, root, goal, seed);
}

Trajectory plan_ir3ne(const PlanContext& ctx, const Eigen::VectorXd& root, const GoalModel& goal, std::uint64_t seed) {
    return plan_global(ctx, CostMode::Ir3ne, root, goal, seed);
}

std::vector<Eigen::VectorXd> de_smooth(const PlanContext& ctx, CostMode mode, const std::vector<Eigen::VectorXd>& path,
                                       double gap_limit, std::uint64_t seed) {
    const PlannerWeights& w = ctx.weights;
    if (path.size() < 3 || w.de_generations == 0) return path;
    const RobotModel& r = ctx.robot();
    const int n = r.dof();
    const int m = static_cast<int>(path.size()) - 2;
    const int dim = m * n;

    auto unpack = [&](const Eigen::VectorXd& x) {
        std::vector<Eigen::VectorXd> p = path;
        for (int i = 0; i < m; ++i) p[static_cast<std::size_t>(i + 1)] = x.segment(i * n, n);
        return p;
    };
    auto objective = [&](const std::vector<Eigen::VectorXd>& p) { return path_cost(ctx, mode, p) + smoothness_penalty(p); };
    // Every term is nonnegative, so evaluation stops once `bound` is exceeded.
    auto objective_within = [&](const std::vector<Eigen::VectorXd>& p, double bound) {
        double f = smoothness_penalty(p);
        for (std::size_t i = 1; i < p.size() && f <= bound; ++i) f += edge_cost(ctx, mode, p[i - 1], p[i]);
        return f;
    };
    // Cheap screen: waypoints and segment midpoints only.
    auto feasible = [&](const std::vector<Eigen::VectorXd>& p) {
        if (max_gap(p) > gap_limit) return false;
        for (std::size_t i = 1; i < p.size(); ++i) {
            if (i + 1 < p.size() && !ctx.config_free(p[i])) return false;
            if (!ctx.config_free(0.5 * (p[i - 1] + p[i]))) return false;
        }
        return true;
    };
    Eigen::VectorXd lo(dim), hi(dim), x0(dim);
    for (int i = 0; i < m; ++i) {
        lo.segment(i * n, n) = r.lower();
        hi.segment(i * n, n) = r.upper();
        x0.segment(i * n, n) = path[static_cast<std::size_t>(i + 1)];
    }

    Rng rng(seed);
    const int np = w.de_population;
    std::vector<Eigen::VectorXd> pop(static_cast<std::size_t>(np));
    std::vector<double> fit(static_cast<std::size_t>(np));
    for (int k = 0; k < np; ++k) {
        Eigen::VectorXd x = x0;
        if (k > 0) {
            for (int d = 0; d < dim; ++d) x[d] += rng.uniform(-0.25, 0.25) * w.tube;
            x = x.cwiseMax(lo).cwiseMin(hi);
        }
        const auto p = unpack(x);
        fit[static_cast<std::size_t>(k)] = (k == 0 || feasible(p)) ? objective(p) : kInf;
        pop[static_cast<std::size_t>(k)] = std::move(x);
    }
    for (int gen = 0; gen < w.de_generations; ++gen) {
        for (int k = 0; k < np; ++k) {
            int a, b, c;
            do a = static_cast<int>(rng.index(static_cast<std::uint64_t>(np))); while (a == k);
            do b = static_cast<int>(rng.index(static_cast<std::uint64_t>(np))); while (b == k || b == a);
            do c = static_cast<int>(rng.index(static_cast<std::uint64_t>(np))); while (c == k || c == a || c == b);
            const int jrand = static_cast<int>(rng.index(static_cast<std::uint64_t>(dim)));
            Eigen::VectorXd trial = pop[static_cast<std::size_t>(k)];
            for (int d = 0; d < dim; ++d) {
                if (d == jrand || rng.uniform() < w.de_crossover) {
                    trial[d] = pop[static_cast<std::size_t>(a)][d] +
                               w.de_weight * (pop[static_cast<std::size_t>(b)][d] - pop[static_cast<std::size_t>(c)][d]);
                }
            }
            trial = trial.cwiseMax(lo).cwiseMin(hi);
            const auto p = unpack(trial);
            const double f = objective_within(p, fit[static_cast<std::size_t>(k)]);
            if (f <= fit[static_cast<std::size_t>(k)] && feasible(p)) {
                pop[static_cast<std::size_t>(k)] = std::move(trial);
                fit[static_cast<std::size_t>(k)] = f;
            }
        }
    }
    std::vector<int> order(static_cast<std::size_t>(np));
    for (int k = 0; k < np; ++k) order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fit[static_cast<std::size_t>(a)] < fit[static_cast<std::size_t>(b)]; });
    for (int k : order) {
        if (!std::isfinite(fit[static_cast<std::size_t>(k)])) break;
        const auto p = unpack(pop[static_cast<std::size_t>(k)]);
        bool ok = true;
        for (std::size_t i = 1; i < p.size() && ok; ++i) {
            ok = (i + 1 == p.size() || ctx.config_free(p[i])) && ctx.segment_free(p[i - 1], p[i]);
        }
        if (ok) return p;
    }
    return path;
}

Trajectory refine_hierarchical(const PlanContext& ctx, CostMode mode, const Trajectory& global, const GoalModel& goal,
                               std::uint64_t seed) {
    check_inputs(ctx, mode, global.waypoints.front(), goal);
    const PlannerWeights& w = ctx.weights;
    const RobotModel& r = ctx.robot();
    const auto approach = global.approach();
    if (approach.size() < 2) return global;

    Roadmap g;
    for (std::size_t i = 0; i + 1 < approach.size(); ++i) g.add_node(approach[i]);
    // The goal goes last among the path nodes so the root stays node 0.
    const int goal_node = g.add_node(approach.back());
    Rng rng(derive_seed(seed, 1));
    const int target = static_cast<int>(approach.size()) + w.n_local;
    for (int attempts = 0; static_cast<int>(g.size()) < target && attempts < 20 * w.n_local; ++attempts) {
        const double s = rng.uniform() * static_cast<double>(approach.size() - 1);
        const auto i = std::min(approach.size() - 2, static_cast<std::size_t>(s));
        Eigen::VectorXd q = approach[i] + (s - static_cast<double>(i)) * (approach[i + 1] - approach[i]);
        for (int d = 0; d < q.size(); ++d) q[d] += rng.uniform(-w.tube, w.tube);
        q = q.cwiseMax(r.lower()).cwiseMin(r.upper());
        if (ctx.config_free(q)) g.add_node(q);
    }
    const double rho = std::max(g.radius_for_degree(10.0), max_gap(approach) * (1.0 + 1e-9));
    g.connect(rho);
    std::vector<Eigen::VectorXd> local = approach;
    const SearchResult res = search(ctx, mode, g, goal_node, goal);
    if (res.found) {
        local.clear();
        for (int v : res.path) local.push_back(g.node(v));
    }
    local = de_smooth(ctx, mode, local, rho, derive_seed(seed, 2));

    auto objective = [&](const std::vector<Eigen::VectorXd>& p) { return path_cost(ctx, mode, p) + smoothness_penalty(p); };
    // Every term is nonnegative, so evaluation stops once `bound` is exceeded.
    auto objective_within = [&](const std::vector<Eigen::VectorXd>& p, double bound) {
        double f = smoothness_penalty(p);
        for (std::size_t i = 1; i < p.size() && f <= bound; ++i) f += edge_cost(ctx, mode, p[i - 1], p[i]);
        return f;
    };
    if (!(objective(local) <= objective(approach))) return global;
    Trajectory out;
    out.waypoints = local;
    out.approach_end = local.size() - 1;
    append_closing(out, goal.closed, w.closing_steps);
    return out;
}

Trajectory plan_reach(const PlanContext& ctx, CostMode mode, const Eigen::VectorXd& root, const GoalModel& goal,
                      std::uint64_t seed) {
    const Trajectory global = plan_global(ctx, mode, root, goal, derive_seed(seed, 11));
    return refine_hierarchical(ctx, mode, global, goal, derive_seed(seed, 12));
}

void append_closing(Trajectory& t, const Eigen::VectorXd& closed, int steps) {
    const Eigen::VectorXd start = t.waypoints[t.approach_end];
    t.waypoints.resize(t.approach_end + 1);
    for (int i = 1; i <= steps; ++i) t.waypoints.push_back(start + (closed - start) * (static_cast<double>(i) / steps));
}

void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
    const auto old = os.precision(std::numeric_limits<double>::max_digits10);
    const Eigen::Index n = t.waypoints.empty() ? 0 : t.waypoints.front().size();
    os << "step";
    for (Eigen::Index i = 0; i < n; ++i) os << ",q_" << i;
    os << ",phase\n";
    for (std::size_t s = 0; s < t.waypoints.size(); ++s) {
        os << s;
        for (Eigen::Index i = 0; i < n; ++i) os << ',' << t.waypoints[s][i];
        os << ',' << (s <= t.approach_end ? "approach" : "closing") << '\n';
    }
    os.precision(old);
}

CostMode cost_mode_from_string(const std::string& s) {
    if (s == "baseline" || s == "prm" || s == "bsp") return CostMode::Baseline;
    if (s == "ir3ne") return CostMode::Ir3ne;
    throw InvalidArgument("unknown cost mode '" + s + "'");
}

}  // namespace hbgrasp
