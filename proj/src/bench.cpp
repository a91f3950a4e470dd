#include "hbgrasp/bench.hpp"

#include "hbgrasp/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace hbgrasp {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

/// Reads fields off a JSON object and rejects keys nobody asked for.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ScenarioError(where_ + ": " + msg); }

    bool has(const std::string& k) {
        seen_.insert(k);
        return j_.contains(k);
    }
    const json& at(const std::string& k) {
        seen_.insert(k);
        if (!j_.contains(k)) fail("missing field '" + k + "'");
        return j_.at(k);
    }

    double number(const std::string& k, double def) {
        if (!has(k)) return def;
        const json& v = j_.at(k);
        if (!v.is_number()) fail("'" + k + "' must be a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail("'" + k + "' must be finite");
        return x;
    }
    long long integer(const std::string& k, long long def) {
        if (!has(k)) return def;
        const json& v = j_.at(k);
        if (!v.is_number_integer()) fail("'" + k + "' must be an integer");
        return v.get<long long>();
    }
    bool boolean(const std::string& k, bool def) {
        if (!has(k)) return def;
        const json& v = j_.at(k);
        if (!v.is_boolean()) fail("'" + k + "' must be true or false");
        return v.get<bool>();
    }
    std::string string(const std::string& k, const std::string& def) {
        if (!has(k)) return def;
        const json& v = j_.at(k);
        if (!v.is_string()) fail("'" + k + "' must be a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const std::string& k) {
        const json& v = at(k);
        if (!v.is_array()) fail("'" + k + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail("'" + k + "' must be an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) fail("unknown field '" + it.key() + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Pose6D pose_from(Fields& f, const std::string& k) {
    const auto v = f.numbers(k);
    if (v.size() != 7) f.fail("'" + k + "' must hold px py pz qw qx qy qz");
    std::array<double, 7> a{};
    std::copy(v.begin(), v.end(), a.begin());
    if (Eigen::Vector4d(a[3], a[4], a[5], a[6]).norm() < 1e-9) f.fail("'" + k + "' has a zero quaternion");
    return Pose6D::from_array(a);
}

GraspSpec grasp_from_json(const json& j, const std::string& where) {
    Fields f(j, where);
    GraspSpec g;
    g.wrist_in_object = pose_from(f, "wrist_in_object");
    g.pregrasp_fingers = to_eigen(f.numbers("pregrasp"));
    g.closed_fingers = to_eigen(f.numbers("closed"));
    g.ik_seed = to_eigen(f.numbers("home"));
    for (double x : f.numbers("required")) {
        if (x != std::floor(x) || x < 0) f.fail("'required' must list finger indices");
        g.required_fingers.insert(static_cast<int>(x));
    }
    f.finish();
    return g;
}

json grasp_to_json(const GraspSpec& g) {
    const auto a = g.wrist_in_object.to_array();
    return json{{"wrist_in_object", std::vector<double>(a.begin(), a.end())},
                {"pregrasp", to_std(g.pregrasp_fingers)},
                {"closed", to_std(g.closed_fingers)},
                {"home", to_std(g.ik_seed)},
                {"required", std::vector<int>(g.required_fingers.begin(), g.required_fingers.end())}};
}

template <class F>
void wrap(const std::string& where, F&& fn) {
    try {
        fn();
    } catch (const ScenarioError&) {
        throw;
    } catch (const Error& e) {
        throw ScenarioError(where + ": " + e.what());
    }
}

}  // namespace

void Scenario::validate() const {
    if (version != kScenarioVersion) throw ScenarioError("scenario: unsupported version " + std::to_string(version));
    if (objects.empty()) throw ScenarioError("scenario: no objects");
    std::set<std::string> names;
    for (const auto& o : objects) {
        if (o.name.empty()) throw ScenarioError("scenario: object without a name");
        if (!names.insert(o.name).second) throw ScenarioError("scenario: duplicate object name '" + o.name + "'");
        if (o.kind.empty() == o.ply.empty()) throw ScenarioError("scenario: object '" + o.name + "' needs exactly one of kind or ply");
        if (!o.kind.empty() && std::find(object_kinds().begin(), object_kinds().end(), o.kind) == object_kinds().end()) {
            throw ScenarioError("scenario: unknown object kind '" + o.kind + "'");
        }
        if (!o.ply.empty() && !o.grasp) throw ScenarioError("scenario: object '" + o.name + "' loaded from file needs a grasp");
    }
    if (trials < 1) throw ScenarioError("scenario: trials must be >= 1");
    if (view_count < 1) throw ScenarioError("scenario: view_count must be >= 1");
    if (views.empty()) throw ScenarioError("scenario: no view conditions");
    for (int v : views) {
        if (v < 1 || v > view_count) throw ScenarioError("scenario: views must lie in [1, view_count]");
    }
    if (strategies.empty()) throw ScenarioError("scenario: no strategies");
    if (n_fits < 1) throw ScenarioError("scenario: fits must be >= 1");
    if (n_features < 1) throw ScenarioError("scenario: features must be >= 1");
    if (!(max_fit_tilt >= 0.0)) throw ScenarioError("scenario: max_fit_tilt_deg must be >= 0");
    if (!(offsets.position >= 0.0) || !(offsets.yaw >= 0.0)) throw ScenarioError("scenario: offsets must be >= 0");
    if (!(contact_eps >= 0.0)) throw ScenarioError("scenario: contact_eps must be >= 0");
    if (!nominal_position.allFinite()) throw ScenarioError("scenario: nominal_position must be finite");
    wrap("scenario", [&] {
        kernel.validate();
        episode.validate();
    });
}

Scenario scenario_from_json(const json& j) {
    Scenario s;
    Fields f(j, "scenario");
    s.version = static_cast<int>(f.integer("version", -1));
    if (s.version != kScenarioVersion) f.fail("unsupported or missing version (expected " + std::to_string(kScenarioVersion) + ")");

    const json& objs = f.at("objects");
    if (!objs.is_array() || objs.empty()) f.fail("'objects' must be a nonempty array");
    for (std::size_t i = 0; i < objs.size(); ++i) {
        const std::string where = "scenario.objects[" + std::to_string(i) + "]";
        Fields of(objs[i], where);
        ObjectSpec o;
        o.kind = of.string("kind", "");
        o.ply = of.string("ply", "");
        o.name = of.string("name", o.kind);
        if (of.has("params")) {
            const json& p = of.at("params");
            if (!p.is_object()) of.fail("'params' must be an object");
            for (auto it = p.begin(); it != p.end(); ++it) {
                if (!it.value().is_number()) of.fail("param '" + it.key() + "' must be a number");
                o.params[it.key()] = it.value().get<double>();
            }
        }
        if (of.has("grasp")) o.grasp = grasp_from_json(of.at("grasp"), where + ".grasp");
        of.finish();
        s.objects.push_back(std::move(o));
    }

    s.seed = static_cast<std::uint64_t>(f.integer("seed", static_cast<long long>(s.seed)));
    s.trials = static_cast<int>(f.integer("trials", s.trials));
    s.view_count = static_cast<int>(f.integer("view_count", s.view_count));
    if (f.has("views")) {
        s.views.clear();
        for (double v : f.numbers("views")) {
            if (v != std::floor(v)) f.fail("'views' must hold integers");
            s.views.push_back(static_cast<int>(v));
        }
    }
    if (f.has("nominal_position")) {
        const auto v = f.numbers("nominal_position");
        if (v.size() != 3) f.fail("'nominal_position' must hold 3 numbers");
        s.nominal_position = Vec3(v[0], v[1], v[2]);
    }
    if (f.has("offsets")) {
        Fields of(f.at("offsets"), "scenario.offsets");
        s.offsets.position = of.number("position", s.offsets.position);
        s.offsets.yaw = of.number("yaw_deg", s.offsets.yaw / kDeg) * kDeg;
        s.offsets.symmetry_trap = of.boolean("symmetry_trap", s.offsets.symmetry_trap);
        s.max_fit_tilt = of.number("max_fit_tilt_deg", s.max_fit_tilt / kDeg) * kDeg;
        of.finish();
    }
    const long long fits = f.integer("fits", static_cast<long long>(s.n_fits));
    const long long features = f.integer("features", static_cast<long long>(s.n_features));
    const long long particles = f.integer("particles", static_cast<long long>(s.episode.particles));
    const long long hyps = f.integer("hypotheses", static_cast<long long>(s.episode.k_hypotheses));
    if (fits < 1 || features < 1 || particles < 1 || hyps < 2) f.fail("fits, features and particles must be >= 1, hypotheses >= 2");
    s.n_fits = static_cast<std::size_t>(fits);
    s.n_features = static_cast<std::size_t>(features);
    s.episode.particles = static_cast<std::size_t>(particles);
    s.episode.k_hypotheses = static_cast<std::size_t>(hyps);
    s.episode.max_iterations = static_cast<int>(f.integer("max_iterations", s.episode.max_iterations));
    s.episode.retreat = f.number("retreat", s.episode.retreat);
    s.episode.link_attribution = f.boolean("link_attribution", s.episode.link_attribution);
    s.contact_eps = f.number("contact_eps", s.contact_eps);
    s.robot = f.string("robot", "");
    s.perfect_estimate = f.boolean("perfect_estimate", false);

    if (f.has("strategies")) {
        const json& st = f.at("strategies");
        if (!st.is_array()) f.fail("'strategies' must be an array");
        s.strategies.clear();
        for (const auto& e : st) {
            if (!e.is_string()) f.fail("'strategies' must hold names");
            wrap("scenario.strategies", [&] { s.strategies.push_back(strategy_from_string(e.get<std::string>())); });
        }
        std::set<Strategy> uniq(s.strategies.begin(), s.strategies.end());
        if (uniq.size() != s.strategies.size()) f.fail("duplicate strategy");
    }
    if (f.has("kernel")) {
        Fields kf(f.at("kernel"), "scenario.kernel");
        const auto sp = kf.numbers("sigma_pos");
        if (sp.size() != 3) kf.fail("'sigma_pos' must hold 3 numbers");
        s.kernel.sigma_pos = Vec3(sp[0], sp[1], sp[2]);
        s.kernel.sigma_rot = kf.number("sigma_rot_deg", s.kernel.sigma_rot / kDeg) * kDeg;
        kf.finish();
    }
    if (f.has("jitter")) {
        Fields jf(f.at("jitter"), "scenario.jitter");
        s.episode.jitter.sigma_pos = jf.number("sigma_pos", s.episode.jitter.sigma_pos);
        s.episode.jitter.sigma_rot = jf.number("sigma_rot_deg", s.episode.jitter.sigma_rot / kDeg) * kDeg;
        jf.finish();
    }
    if (f.has("tactile")) {
        Fields tf(f.at("tactile"), "scenario.tactile");
        auto& t = s.episode.tactile;
        t.eta = tf.number("eta", t.eta);
        t.lambda = tf.number("lambda", t.lambda);
        t.d_max = tf.number("d_max", t.d_max);
        if (tf.has("aggregation")) {
            const std::string a = tf.string("aggregation", "");
            wrap("scenario.tactile", [&] { t.aggregation = aggregation_from_string(a); });
        }
        tf.finish();
    }
    if (f.has("planner")) {
        Fields pf(f.at("planner"), "scenario.planner");
        auto& w = s.episode.weights;
        w.alpha = pf.number("alpha", w.alpha);
        w.beta = pf.number("beta", w.beta);
        w.rho = pf.number("rho", w.rho);
        w.n_nodes = static_cast<int>(pf.integer("n_nodes", w.n_nodes));
        w.n_local = static_cast<int>(pf.integer("n_local", w.n_local));
        w.node_growth = static_cast<int>(pf.integer("node_growth", w.node_growth));
        w.max_nodes = static_cast<int>(pf.integer("max_nodes", w.max_nodes));
        w.sample_margin = pf.number("sample_margin", w.sample_margin);
        w.tube = pf.number("tube", w.tube);
        w.edge_step = pf.number("edge_step", w.edge_step);
        w.clearance = pf.number("clearance", w.clearance);
        w.de_population = static_cast<int>(pf.integer("de_population", w.de_population));
        w.de_weight = pf.number("de_weight", w.de_weight);
        w.de_crossover = pf.number("de_crossover", w.de_crossover);
        w.de_generations = static_cast<int>(pf.integer("de_generations", w.de_generations));
        w.closing_steps = static_cast<int>(pf.integer("closing_steps", w.closing_steps));
        pf.finish();
    }
    f.finish();
    s.validate();
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ScenarioError("scenario " + path.string() + ": " + e.what());
    }
    Scenario s = scenario_from_json(j);
    // Relative paths inside the scenario resolve against its directory.
    const auto base = path.parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
    };
    resolve(s.robot);
    for (auto& o : s.objects) resolve(o.ply);
    return s;
}

json to_json(const Scenario& s) {
    json objs = json::array();
    for (const auto& o : s.objects) {
        json jo{{"name", o.name}};
        if (!o.kind.empty()) jo["kind"] = o.kind;
        if (!o.ply.empty()) jo["ply"] = o.ply;
        if (!o.params.empty()) jo["params"] = o.params;
        if (o.grasp) jo["grasp"] = grasp_to_json(*o.grasp);
        objs.push_back(jo);
    }
    std::vector<std::string> strategies;
    for (auto st : s.strategies) strategies.push_back(to_string(st));
    const auto& w = s.episode.weights;
    const auto& t = s.episode.tactile;
    json j{{"version", s.version},
           {"objects", objs},
           {"seed", s.seed},
           {"trials", s.trials},
           {"views", s.views},
           {"view_count", s.view_count},
           {"nominal_position", {s.nominal_position.x(), s.nominal_position.y(), s.nominal_position.z()}},
           {"offsets",
            {{"position", s.offsets.position},
             {"yaw_deg", s.offsets.yaw / kDeg},
             {"symmetry_trap", s.offsets.symmetry_trap},
             {"max_fit_tilt_deg", s.max_fit_tilt / kDeg}}},
           {"fits", s.n_fits},
           {"features", s.n_features},
           {"particles", s.episode.particles},
           {"hypotheses", s.episode.k_hypotheses},
           {"max_iterations", s.episode.max_iterations},
           {"retreat", s.episode.retreat},
           {"link_attribution", s.episode.link_attribution},
           {"contact_eps", s.contact_eps},
           {"perfect_estimate", s.perfect_estimate},
           {"strategies", strategies},
           {"kernel", {{"sigma_pos", {s.kernel.sigma_pos.x(), s.kernel.sigma_pos.y(), s.kernel.sigma_pos.z()}},
                       {"sigma_rot_deg", s.kernel.sigma_rot / kDeg}}},
           {"jitter", {{"sigma_pos", s.episode.jitter.sigma_pos}, {"sigma_rot_deg", s.episode.jitter.sigma_rot / kDeg}}},
           {"tactile", {{"eta", t.eta}, {"lambda", t.lambda}, {"d_max", t.d_max}, {"aggregation", to_string(t.aggregation)}}},
           {"planner",
            {{"alpha", w.alpha},
             {"beta", w.beta},
             {"rho", w.rho},
             {"n_nodes", w.n_nodes},
             {"n_local", w.n_local},
             {"node_growth", w.node_growth},
             {"max_nodes", w.max_nodes},
             {"sample_margin", w.sample_margin},
             {"tube", w.tube},
             {"edge_step", w.edge_step},
             {"clearance", w.clearance},
             {"de_population", w.de_population},
             {"de_weight", w.de_weight},
             {"de_crossover", w.de_crossover},
             {"de_generations", w.de_generations},
             {"closing_steps", w.closing_steps}}}};
    if (!s.robot.empty()) j["robot"] = s.robot;
    return j;
}

namespace {

struct GraspTemplate {
    Vec3 wrist;            // wrist position in the object frame
    double lift;           // home height above the grasp wrist
    double open;           // proximal angle before closing
    double close_proximal;
    double close_distal;
    std::set<int> required;  // empty: every finger
};

GraspTemplate grasp_template(const std::string& kind) {
    // Top-down pinch across the object's y axis.
    if (kind == "jug") return {Vec3(0.093, 0.0, 0.215), 0.15, -0.6, 1.0, 0.6, {0, 2}};  // handle, thumb against middle
    if (kind == "lshape") return {Vec3(0.02, -0.03, 0.135), 0.15, -0.6, 1.0, 0.6};
    if (kind == "box") return {Vec3(0.0, 0.0, 0.175), 0.15, -0.6, 1.0, 0.6};
    if (kind == "cylinder") return {Vec3(0.0, 0.0, 0.225), 0.15, -0.6, 1.0, 0.6};
    if (kind == "bottle") return {Vec3(0.0, 0.0, 0.225), 0.15, -0.6, 1.0, 0.6};
    if (kind == "stapler") return {Vec3(0.0, 0.0, 0.12), 0.15, -0.6, 1.0, 0.6};
    if (kind == "spray") return {Vec3(0.0, 0.0, 0.2), 0.15, -0.6, 1.0, 0.6};
    throw InvalidArgument("no default grasp for object kind '" + kind + "'");
}

// Arm posture reaching forward and down; used to seed every IK call.
Eigen::VectorXd arm_guess(const RobotModel& r) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(r.dof());
    const double guess[] = {0.0, -0.2, 1.6, 0.0, 0.2, 0.0};
    for (int i = 0; i < std::min(6, r.arm_dof()); ++i) q[i] = guess[i];
    return r.make_config(q).q;
}

}  // namespace

GraspSpec default_grasp(const std::string& kind, const RobotModel& r) {
    const GraspTemplate t = grasp_template(kind);
    GraspSpec g;
    Eigen::Matrix3d rot;
    rot.col(0) = Vec3(0, 0, -1);
    rot.col(1) = Vec3(0, 1, 0);
    rot.col(2) = Vec3(1, 0, 0);
    g.wrist_in_object = Pose6D(t.wrist, Quat(rot));

    const int nf = r.dof() - r.arm_dof();
    g.pregrasp_fingers = Eigen::VectorXd::Zero(nf);
    g.closed_fingers = Eigen::VectorXd::Zero(nf);
    for (int f = 0; f < r.finger_count(); ++f) {
        bool first = true;
        for (int l : r.finger_links(f)) {
            const int d = r.link(static_cast<std::size_t>(l)).dof_index;
            if (d < 0) continue;
            g.pregrasp_fingers[d - r.arm_dof()] = first ? t.open : 0.0;
            g.closed_fingers[d - r.arm_dof()] = first ? t.close_proximal : t.close_distal;
            first = false;
        }
        if (t.required.empty() || t.required.contains(f)) g.required_fingers.insert(f);
    }
    const Eigen::VectorXd lo = r.lower().tail(nf), hi = r.upper().tail(nf);
    g.pregrasp_fingers = g.pregrasp_fingers.cwiseMax(lo).cwiseMin(hi);
    g.closed_fingers = g.closed_fingers.cwiseMax(lo).cwiseMin(hi);

    // Home: the same hand orientation lifted above the nominal object spot.
    const Pose6D home_wrist(Vec3(0.5, 0.0, 0.0) + t.wrist + Vec3(0, 0, t.lift), Quat(rot));
    const IkResult ik = ik_goal(r, home_wrist, g.pregrasp_fingers, r.make_config(arm_guess(r)));
    if (!ik.converged) throw Unreachable("default grasp: home posture unreachable for this robot");
    g.ik_seed = ik.config.q;
    return g;
}

std::uint64_t trial_seed(std::uint64_t master, const std::string& object, Strategy, int views, int trial) {
    std::uint64_t s = derive_seed(master, hash_name(object));
    s = derive_seed(s, static_cast<std::uint64_t>(views));
    return derive_seed(s, static_cast<std::uint64_t>(trial));
}

PreparedObject prepare_object(const ObjectSpec& spec, const RobotModel& r) {
    PreparedObject p;
    p.spec = spec;
    p.model = std::make_shared<const PointCloudModel>(spec.ply.empty() ? make_object(spec.kind, spec.params)
                                                                         : load_cloud(spec.ply));
    p.surflets = std::make_shared<const SurfletModel>(*p.model);
    p.grasp = spec.grasp ? *spec.grasp : default_grasp(spec.kind, r);
    p.grasp.validate(r);
    return p;
}

TrialSetup prepare_trial(const Scenario& s, const PreparedObject& obj, int views, int trial) {
    TrialSetup t;
    t.seed = trial_seed(s.seed, obj.spec.name, Strategy::Bsp, views, trial);
    Rng rng(derive_seed(t.seed, 1));

    const double dx = rng.uniform(-s.offsets.position, s.offsets.position);
    const double dy = rng.uniform(-s.offsets.position, s.offsets.position);
    const double yaw = rng.uniform(-s.offsets.yaw, s.offsets.yaw);
    t.true_pose = Pose6D::from_axis_angle(Vec3::UnitZ(), yaw, s.nominal_position + Vec3(dx, dy, 0.0));

    const PointCloudModel truth = obj.model->transformed(t.true_pose);
    PointCloudModel query;
    // A sector can miss the object entirely; such masks are redrawn.
    for (int attempt = 0; query.empty(); ++attempt) {
        if (attempt == 32) throw ScenarioError("object '" + obj.spec.name + "': no view sector sees the object");
        std::vector<int> sectors(static_cast<std::size_t>(s.view_count));
        for (int i = 0; i < s.view_count; ++i) sectors[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < views; ++i) {
            const auto j = static_cast<std::size_t>(i) + rng.index(static_cast<std::uint64_t>(s.view_count - i));
            std::swap(sectors[static_cast<std::size_t>(i)], sectors[j]);
        }
        t.mask.view_count = s.view_count;
        t.mask.selected = std::set<int>(sectors.begin(), sectors.begin() + views);
        try {
            query = apply_view_mask(truth, t.mask, t.true_pose.position());
        } catch (const InvalidArgument&) {
        }
    }
    t.coverage = static_cast<double>(query.size()) / static_cast<double>(obj.model->size());

    std::vector<Particle> seeds;
    if (s.perfect_estimate) {
        t.initial = BeliefState(std::vector<Particle>(s.episode.particles, Particle{t.true_pose, 1.0}), s.kernel);
        return t;
    }
    try {
        const auto fits = build_initial_belief(*obj.surflets, query, s.n_fits, s.n_features, derive_seed(t.seed, 2));
        const Pose6D flip = compose(compose(t.true_pose, Pose6D::from_axis_angle(Vec3::UnitZ(), std::numbers::pi)),
                                    inverse(t.true_pose));
        // The object rests upright on the table, so tilted fits are dropped
        // unless nothing else is left.
        const double min_up = std::cos(s.max_fit_tilt);
        const bool any_upright = std::any_of(fits.begin(), fits.end(), [&](const ScoredPose& f) {
            return f.valid && f.pose.rotate(Vec3::UnitZ()).z() >= min_up;
        });
        for (std::size_t j = 0; j < fits.size(); ++j) {
            if (!fits[j].valid) continue;
            if (any_upright && fits[j].pose.rotate(Vec3::UnitZ()).z() < min_up) continue;
            Pose6D p = fits[j].pose;
            // The trap turns every other fit half a turn about the object's vertical axis.
            if (s.offsets.symmetry_trap && j % 2 == 1) p = compose(flip, p);
            seeds.push_back({p, std::max(fits[j].score, 1e-6)});
        }
    } catch (const PlanningFailure&) {
        // No usable fit: uniform prior over the offset box.
        for (std::size_t j = 0; j < s.n_fits; ++j) {
            const Vec3 p = s.nominal_position + Vec3(rng.uniform(-s.offsets.position, s.offsets.position),
                                                     rng.uniform(-s.offsets.position, s.offsets.position), 0.0);
            seeds.push_back({Pose6D::from_axis_angle(Vec3::UnitZ(), rng.uniform(-s.offsets.yaw, s.offsets.yaw), p), 1.0});
        }
    }
    t.initial = sample_kde(BeliefState(seeds, s.kernel), s.episode.particles, derive_seed(t.seed, 3));
    return t;
}

namespace {

RobotModel scenario_robot(const Scenario& s) { return s.robot.empty() ? default_robot() : load_robot(s.robot); }

ClearanceOptions bench_clearance() {
    ClearanceOptions o;
    o.exact_plane_offset = true;
    return o;
}

template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (w == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

std::string fmt(double x) {
    if (!std::isfinite(x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

}  // namespace

std::vector<TrialRecord> run_bench(const Scenario& s, const BenchOptions& opt) {
    s.validate();
    const RobotModel robot = scenario_robot(s);
    const RobotGeometry geometry(robot, bench_clearance());
    std::vector<PreparedObject> objects;
    for (const auto& o : s.objects) {
        try {
            objects.push_back(prepare_object(o, robot));
        } catch (const ScenarioError&) {
            throw;
        } catch (const Error& e) {
            throw ScenarioError("object '" + o.name + "': " + e.what());
        }
    }

    struct Cell {
        std::size_t object;
        int views;
        int trial;
    };
    std::vector<Cell> cells;
    for (std::size_t o = 0; o < objects.size(); ++o) {
        for (int v : s.views) {
            for (int t = 0; t < s.trials; ++t) cells.push_back({o, v, t});
        }
    }
    std::vector<TrialSetup> setups(cells.size());
    parallel_for(cells.size(), opt.workers, [&](std::size_t i) {
        setups[i] = prepare_trial(s, objects[cells[i].object], cells[i].views, cells[i].trial);
    });

    const std::size_t ns = s.strategies.size();
    std::vector<TrialRecord> records(cells.size() * ns);
    parallel_for(records.size(), opt.workers, [&](std::size_t i) {
        const Cell& c = cells[i / ns];
        const TrialSetup& setup = setups[i / ns];
        const PreparedObject& obj = objects[c.object];
        const GroundTruth gt(obj.model, setup.true_pose, s.contact_eps);
        TrialRecord r = run_episode(geometry, obj.model, setup.initial, obj.grasp, gt, s.strategies[i % ns], s.episode,
                                    setup.seed);
        r.object = obj.spec.name;
        r.views = c.views;
        r.coverage = setup.coverage;
        r.trial = c.trial;
        records[i] = std::move(r);
    });

    if (!opt.out_dir.empty()) {
        std::filesystem::create_directories(opt.out_dir);
        write_jsonl(records, opt.out_dir / "trials.jsonl");
        std::ofstream timing(opt.out_dir / "timing.csv");
        timing << "object,strategy,views,trial,wall_time_s\n";
        for (const auto& r : records) {
            timing << r.object << ',' << r.strategy << ',' << r.views << ',' << r.trial << ',' << fmt(r.wall_time) << '\n';
        }
        write_report(records, opt.out_dir);
    }
    return records;
}

void write_jsonl(const std::vector<TrialRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<TrialRecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<TrialRecord> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(trial_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ScenarioError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

namespace {

CellStats stats(const std::vector<double>& xs) {
    CellStats c;
    c.n = xs.size();
    if (xs.empty()) {
        c.mean = c.std = std::numeric_limits<double>::quiet_NaN();
        return c;
    }
    double sum = 0.0;
    for (double x : xs) sum += x;
    c.mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - c.mean) * (x - c.mean);
    c.std = std::sqrt(ss / static_cast<double>(xs.size()));
    return c;
}

}  // namespace

std::vector<CellSummary> summarize(const std::vector<TrialRecord>& records) {
    struct Acc {
        std::vector<double> iterations, kl, success, first, coverage;
    };
    std::vector<std::tuple<std::string, std::string, int>> order;
    std::map<std::tuple<std::string, std::string, int>, Acc> acc;
    for (const auto& r : records) {
        const auto key = std::make_tuple(r.object, r.strategy, r.views);
        if (!acc.contains(key)) order.push_back(key);
        Acc& a = acc[key];
        a.iterations.push_back(r.iterations);
        a.kl.insert(a.kl.end(), r.kl_per_contact.begin(), r.kl_per_contact.end());
        a.success.push_back(r.success ? 1.0 : 0.0);
        a.first.push_back(r.first_attempt_success ? 1.0 : 0.0);
        a.coverage.push_back(r.coverage);
    }
    std::vector<CellSummary> out;
    for (const auto& key : order) {
        const Acc& a = acc.at(key);
        CellSummary c;
        std::tie(c.object, c.strategy, c.views) = key;
        c.coverage_pct = 100.0 * stats(a.coverage).mean;
        c.iterations = stats(a.iterations);
        c.kl = stats(a.kl);
        c.success = stats(a.success);
        c.first_attempt = stats(a.first);
        out.push_back(c);
    }
    return out;
}

void write_report(const std::vector<TrialRecord>& records, const std::filesystem::path& out_dir) {
    if (records.empty()) throw InvalidArgument("report: the trial log is empty");
    const auto cells = summarize(records);
    std::filesystem::create_directories(out_dir);
    auto table = [&](const std::string& name, CellStats CellSummary::*field) {
        std::ofstream out(out_dir / name);
        if (!out) throw IoError("cannot write " + (out_dir / name).string());
        out << "object,strategy,coverage_pct,mean,std,n\n";
        for (const auto& c : cells) {
            const CellStats& st = c.*field;
            char cov[32];
            std::snprintf(cov, sizeof cov, "%.1f", c.coverage_pct);
            out << c.object << ',' << c.strategy << ',' << cov << ',' << fmt(st.mean) << ',' << fmt(st.std) << ',' << st.n
                << '\n';
        }
    };
    table("iterations.csv", &CellSummary::iterations);
    table("kl.csv", &CellSummary::kl);
    table("success.csv", &CellSummary::success);
    table("first_attempt.csv", &CellSummary::first_attempt);
}

}  // namespace hbgrasp
