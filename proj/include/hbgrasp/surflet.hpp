#pragma once

#include "hbgrasp/cloud.hpp"
#include "hbgrasp/kdtree.hpp"

#include <cstdint>
#include <numbers>
#include <vector>

namespace hbgrasp {

/// Rigid-invariant descriptor of two oriented points.
struct SurfletPairFeature {
    double d = 0.0;      // |p2 - p1|
    double alpha = 0.0;  // angle(n1, u)
    double beta = 0.0;   // angle(n2, u)
    double gamma = 0.0;  // angle(n1, n2)
};

/// Throws when the points coincide.
SurfletPairFeature surflet_feature(const OrientedPoint& a, const OrientedPoint& b);

struct SampledFeature {
    SurfletPairFeature feature;
    std::size_t i = 0;
    std::size_t j = 0;
};

/// n_pairs features from uniformly drawn ordered pairs of distinct points.
std::vector<SampledFeature> extract_features(const PointCloudModel& cloud, std::size_t n_pairs, std::uint64_t seed);

struct ScoredPose {
    Pose6D pose;
    double score = 0.0;  // inlier fraction in [0, 1]
    bool valid = true;
};

struct SurfletParams {
    double voxel = 0.01;              // model downsampling cell
    double min_pair_distance = 0.02;  // shorter pairs carry little orientation information
    double tol_d = 0.005;
    double tol_angle = 10.0 * std::numbers::pi / 180.0;
    double vote_pos_cell = 0.02;
    double vote_rot_cell = 0.17;
    double cluster_pos = 0.02;
    double cluster_rot = 10.0 * std::numbers::pi / 180.0;
    std::size_t top_clusters = 8;
    std::size_t max_matches = 100;  // per query feature
    double inlier_radius = 0.01;

    void validate() const;
};

/// Feature table over all pairs of a downsampled model, reusable across fits.
class SurfletModel {
public:
    SurfletModel(const PointCloudModel& model, const SurfletParams& params = {});

    [[nodiscard]] const SurfletParams& params() const { return params_; }
    [[nodiscard]] const std::vector<OrientedPoint>& points() const { return points_; }
    [[nodiscard]] const Pose6D& frame() const { return frame_; }
    [[nodiscard]] std::size_t pair_count() const { return pairs_.size(); }

    /// Model pairs whose features lie within the matching tolerance of f,
    /// closest first, at most params().max_matches.
    [[nodiscard]] std::vector<std::pair<std::uint32_t, std::uint32_t>> match(const SurfletPairFeature& f) const;

private:
    SurfletParams params_;
    std::vector<OrientedPoint> points_;
    Pose6D frame_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs_;
    KdTree<4> index_;
};

/// Pose of the model in the query's coordinates (model frame included).
ScoredPose fit_pose(const SurfletModel& model, const PointCloudModel& query, std::size_t n_features, std::uint64_t seed);
ScoredPose fit_pose(const PointCloudModel& model, const PointCloudModel& query, std::size_t n_features,
                    std::uint64_t seed, const SurfletParams& params = {});

/// N fits with sub-seeds derive_seed(seed, j). Throws if every fit is invalid.
std::vector<ScoredPose> build_initial_belief(const SurfletModel& model, const PointCloudModel& query, std::size_t n,
                                             std::size_t n_features, std::uint64_t seed);

}  // namespace hbgrasp
