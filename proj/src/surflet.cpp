#include "hbgrasp/surflet.hpp"

#include "hbgrasp/error.hpp"
#include "hbgrasp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>
#include <unordered_map>

namespace hbgrasp {

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

Eigen::Vector4d scaled(const SurfletPairFeature& f, const SurfletParams& p) {
    return {f.d / p.tol_d, f.alpha / p.tol_angle, f.beta / p.tol_angle, f.gamma / p.tol_angle};
}

/// Frame at a's position with x along a's normal and the pair direction in the xy plane.
std::optional<Pose6D> pair_frame(const OrientedPoint& a, const OrientedPoint& b) {
    const Vec3 x = a.normal.normalized();
    const Vec3 u = b.position - a.position;
    const Vec3 yr = u - u.dot(x) * x;
    if (yr.norm() < 1e-6 * std::max(1.0, u.norm())) return std::nullopt;
    const Vec3 y = yr.normalized();
    Eigen::Matrix3d R;
    R.col(0) = x;
    R.col(1) = y;
    R.col(2) = x.cross(y);
    return Pose6D(a.position, Quat(R));
}

struct Candidate {
    Pose6D pose;
    Vec3 rotvec;
    double weight;  // 1 / number of model matches of the query feature
};

}  // namespace

SurfletPairFeature surflet_feature(const OrientedPoint& a, const OrientedPoint& b) {
    const Vec3 u = b.position - a.position;
    const double d = u.norm();
    if (!(d > 0.0)) throw InvalidArgument("surflet_feature: coincident points");
    const Vec3 un = u / d;
    return {d, angle_between(a.normal, un), angle_between(b.normal, un), angle_between(a.normal, b.normal)};
}

std::vector<SampledFeature> extract_features(const PointCloudModel& cloud, std::size_t n_pairs, std::uint64_t seed) {
    if (cloud.size() < 2) throw InvalidArgument("extract_features: need at least 2 points");
    Rng rng(seed);
    std::vector<SampledFeature> out;
    out.reserve(n_pairs);
    while (out.size() < n_pairs) {
        const auto i = static_cast<std::size_t>(rng.index(cloud.size()));
        auto j = static_cast<std::size_t>(rng.index(cloud.size() - 1));
        if (j >= i) ++j;
        if ((cloud[i].position - cloud[j].position).norm() == 0.0) continue;
        out.push_back({surflet_feature(cloud[i], cloud[j]), i, j});
    }
    return out;
}

void SurfletParams::validate() const {
    for (double v : {voxel, tol_d, tol_angle, vote_pos_cell, vote_rot_cell, cluster_pos, cluster_rot, inlier_radius}) {
        if (!(v > 0.0)) throw InvalidArgument("surflet parameters must be > 0");
    }
    if (min_pair_distance < 0.0) throw InvalidArgument("min_pair_distance must be >= 0");
    if (top_clusters == 0 || max_matches == 0) throw InvalidArgument("top_clusters and max_matches must be >= 1");
}

SurfletModel::SurfletModel(const PointCloudModel& model, const SurfletParams& params)
    : params_(params), frame_(model.frame()) {
    params_.validate();
    if (model.size() < 2) throw InvalidArgument("surflet model needs at least 2 points");
    // First point of every occupied voxel, in point order.
    std::map<std::tuple<long, long, long>, std::size_t> voxels;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const Vec3 c = (model[i].position / params_.voxel).array().floor();
        voxels.try_emplace({static_cast<long>(c.x()), static_cast<long>(c.y()), static_cast<long>(c.z())}, i);
    }
    std::vector<std::size_t> keep;
    for (const auto& [key, i] : voxels) keep.push_back(i);
    std::sort(keep.begin(), keep.end());
    for (std::size_t i : keep) points_.push_back(model[i]);

    std::vector<Eigen::Vector4d> feats;
    for (std::uint32_t i = 0; i < points_.size(); ++i) {
        for (std::uint32_t j = 0; j < points_.size(); ++j) {
            if (i == j) continue;
            const double d = (points_[i].position - points_[j].position).norm();
            if (d < params_.min_pair_distance || d == 0.0) continue;
            pairs_.emplace_back(i, j);
            feats.push_back(scaled(surflet_feature(points_[i], points_[j]), params_));
        }
    }
    if (pairs_.empty()) throw InvalidArgument("surflet model has no usable point pairs");
    index_ = KdTree<4>(std::move(feats));
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> SurfletModel::match(const SurfletPairFeature& f) const {
    const Eigen::Vector4d q = scaled(f, params_);
    auto hits = index_.knn(q, params_.max_matches);
    std::erase_if(hits, [&](const Neighbor& n) { return ((index_.point(n.index) - q).cwiseAbs().array() > 1.0).any(); });
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    out.reserve(hits.size());
    for (const auto& n : hits) out.push_back(pairs_[n.index]);
    return out;
}

ScoredPose fit_pose(const SurfletModel& model, const PointCloudModel& query, std::size_t n_features, std::uint64_t seed) {
    if (query.size() < 2) throw InvalidArgument("fit_pose: query needs at least 2 points");
    if (n_features == 0) throw InvalidArgument("fit_pose: n_features must be >= 1");
    const SurfletParams& p = model.params();
    const auto& mp = model.points();

    Rng rng(seed);
    std::vector<Candidate> cands;
    std::size_t drawn = 0;
    std::size_t attempts = 0;
    while (drawn < n_features && attempts < 20 * n_features) {
        ++attempts;
        const auto i = static_cast<std::size_t>(rng.index(query.size()));
        auto j = static_cast<std::size_t>(rng.index(query.size() - 1));
        if (j >= i) ++j;
        const double d = (query[i].position - query[j].position).norm();
        if (d < p.min_pair_distance || d == 0.0) continue;
        ++drawn;
        const auto qf = pair_frame(query[i], query[j]);
        if (!qf) continue;
        const auto matches = model.match(surflet_feature(query[i], query[j]));
        const double w = matches.empty() ? 0.0 : 1.0 / static_cast<double>(matches.size());
        for (const auto& [a, b] : matches) {
            const auto mf = pair_frame(mp[a], mp[b]);
            if (!mf) continue;
            const Pose6D t = compose(*qf, inverse(*mf));
            cands.push_back({t, rotation_vector(t.orientation()), w});
        }
    }
    if (cands.empty()) return {Pose6D::identity(), 0.0, false};

    // Vote in a coarse grid over translation and rotation vector.
    using Key = std::array<long, 6>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::uint64_t h = 0;
            for (long v : k) h = mix64(h ^ static_cast<std::uint64_t>(v));
            return static_cast<std::size_t>(h);
        }
    };
    auto key_of = [&](const Vec3& t, const Vec3& w) {
        Key k;
        for (int a = 0; a < 3; ++a) {
            k[a] = static_cast<long>(std::floor(t[a] / p.vote_pos_cell));
            k[3 + a] = static_cast<long>(std::floor(w[a] / p.vote_rot_cell));
        }
        return k;
    };
    std::unordered_map<Key, std::vector<std::uint32_t>, KeyHash> bins;
    for (std::uint32_t c = 0; c < cands.size(); ++c) bins[key_of(cands[c].pose.position(), cands[c].rotvec)].push_back(c);
    // Distinctive features match few model pairs, so their votes count more.
    auto mass = [&](const std::vector<std::uint32_t>& members) {
        double m = 0.0;
        for (auto c : members) m += cands[c].weight;
        return m;
    };
    struct Ranked {
        Key key;
        const std::vector<std::uint32_t>* members;
        double mass;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(bins.size());
    for (const auto& [k, v] : bins) ranked.push_back({k, &v, mass(v)});
    const std::size_t n_ranked = std::min(ranked.size(), 10 * p.top_clusters);
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n_ranked), ranked.end(),
                      [](const Ranked& a, const Ranked& b) {
                          if (a.mass != b.mass) return a.mass > b.mass;
                          return a.key < b.key;
                      });

    auto mean_of = [&](const std::vector<std::uint32_t>& members) {
        Vec3 pos = Vec3::Zero();
        std::vector<Quat> qs;
        std::vector<double> ws;
        double total = 0.0;
        for (auto c : members) {
            pos += cands[c].weight * cands[c].pose.position();
            qs.push_back(cands[c].pose.orientation());
            ws.push_back(cands[c].weight);
            total += cands[c].weight;
        }
        return Pose6D(pos / total, average_quaternions(qs, ws));
    };
    auto within = [&](const std::vector<std::uint32_t>& from, const Pose6D& centre, double dp, double dr) {
        std::vector<std::uint32_t> out;
        for (auto c : from) {
            if ((cands[c].pose.position() - centre.position()).norm() <= dp &&
                geodesic_angle(cands[c].pose.orientation(), centre.orientation()) <= dr) {
                out.push_back(c);
            }
        }
        return out;
    };

    ScoredPose best{Pose6D::identity(), -1.0, false};
    double best_votes = 0.0;
    std::vector<Pose6D> centres;
    for (std::size_t r = 0; r < n_ranked && centres.size() < p.top_clusters; ++r) {
        Pose6D centre = mean_of(*ranked[r].members);
        // Candidates from the neighbouring cells, then mean shift with a shrinking window.
        std::vector<std::uint32_t> pool;
        const Key k0 = ranked[r].key;
        for (int code = 0; code < 729; ++code) {
            Key k = k0;
            int c = code;
            for (int a = 0; a < 6; ++a, c /= 3) k[a] += c % 3 - 1;
            const auto it = bins.find(k);
            if (it != bins.end()) pool.insert(pool.end(), it->second.begin(), it->second.end());
        }
        std::vector<std::uint32_t> members;
        for (const double scale : {1.0, 1.0, 1.0, 0.7, 0.7, 0.5, 0.5, 0.35, 0.35, 0.25, 0.25}) {
            auto next = within(pool, centre, scale * p.cluster_pos, scale * p.cluster_rot);
            if (next.empty()) break;
            members = std::move(next);
            centre = mean_of(members);
        }
        if (members.empty()) continue;
        const bool duplicate = std::any_of(centres.begin(), centres.end(), [&](const Pose6D& o) {
            return (o.position() - centre.position()).norm() <= p.cluster_pos &&
                   geodesic_angle(o.orientation(), centre.orientation()) <= p.cluster_rot;
        });
        if (duplicate) continue;
        centres.push_back(centre);
        std::size_t inliers = 0;
        for (const auto& m : mp) {
            const auto nn = query.index().knn(centre.transform_point(m.position), 1);
            if (nn.front().distance <= p.inlier_radius) ++inliers;
        }
        const double score = static_cast<double>(inliers) / static_cast<double>(mp.size());
        const double votes = mass(members);
        if (score > best.score || (score == best.score && votes > best_votes)) {
            best = {centre, score, true};
            best_votes = votes;
        }
    }
    if (!best.valid) return {Pose6D::identity(), 0.0, false};
    best.pose = compose(best.pose, model.frame());
    return best;
}

ScoredPose fit_pose(const PointCloudModel& model, const PointCloudModel& query, std::size_t n_features,
                    std::uint64_t seed, const SurfletParams& params) {
    return fit_pose(SurfletModel(model, params), query, n_features, seed);
}

std::vector<ScoredPose> build_initial_belief(const SurfletModel& model, const PointCloudModel& query, std::size_t n,
                                             std::size_t n_features, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("build_initial_belief: N must be >= 1");
    std::vector<ScoredPose> out;
    out.reserve(n);
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
        out.push_back(fit_pose(model, query, n_features, derive_seed(seed, j)));
        any = any || (out.back().valid && out.back().score > 0.0);
    }
    if (!any) throw PlanningFailure("build_initial_belief: every registration run failed");
    return out;
}

}  // namespace hbgrasp
