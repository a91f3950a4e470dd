#pragma once

#include "hbgrasp/rng.hpp"
#include "hbgrasp/se3.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace hbgrasp {

struct Particle {
    Pose6D pose;
    double weight = 1.0;
};

/// Weighted particle set with a kernel density estimate over object pose.
/// Weights are normalized on construction.
class BeliefState {
public:
    BeliefState() = default;
    BeliefState(std::vector<Particle> particles, const SE3Kernel& kernel);

    [[nodiscard]] const std::vector<Particle>& particles() const { return particles_; }
    [[nodiscard]] const SE3Kernel& kernel() const { return kernel_; }
    [[nodiscard]] std::size_t size() const { return particles_.size(); }

private:
    std::vector<Particle> particles_;
    SE3Kernel kernel_;
};

struct HypothesisSet {
    std::vector<Pose6D> poses;  // poses[0] is the MLE
};

double density(const BeliefState& b, const Pose6D& y);
/// log density(b, y) via log-sum-exp; finite even where density underflows.
double log_density(const BeliefState& b, const Pose6D& y);

/// Index of the particle with the highest density, lowest index on ties.
std::size_t mle_index(const BeliefState& b);
Pose6D mle(const BeliefState& b);

/// MLE followed by k-1 weighted draws with replacement.
HypothesisSet subsample_hypotheses(const BeliefState& b, std::size_t k, std::uint64_t seed);

/// Pose moved by a per-axis Gaussian translation and a rotation about a
/// uniformly random axis with a half-normal angle.
Pose6D perturb_pose(const Pose6D& p, const Vec3& sigma_pos, double sigma_rot, Rng& rng);

/// Low-variance (systematic) resampling; returns n indices.
std::vector<std::size_t> low_variance_resample(const std::vector<double>& weights, std::size_t n, Rng& rng);

/// Draw n particles from the KDE of b (uniform output weights).
BeliefState sample_kde(const BeliefState& b, std::size_t n, std::uint64_t seed);

struct Jitter {
    double sigma_pos = 0.005;                       // m per axis
    double sigma_rot = 2.0 * 3.14159265358979323846 / 180.0;  // rad

    void validate() const;
};

struct UpdateResult {
    BeliefState belief;
    bool degenerate = false;  // every likelihood was zero
};

/// Bayes reweighting by per-particle likelihoods, then low-variance
/// resampling to n_out jittered particles with uniform weights.
UpdateResult update(const BeliefState& b, const std::vector<double>& likelihood, std::size_t n_out, std::uint64_t seed,
                    const Jitter& jitter = {});

struct KlResult {
    double value = 0.0;
    bool clamped = false;  // a pre probability was raised to 1e-12
};

/// KL(post || pre) between two distributions given as unnormalized log weights.
KlResult kl_from_log_weights(const std::vector<double>& log_post, const std::vector<double>& log_pre);
/// KL(post || pre) over the densities of both beliefs restricted to, and
/// normalized over, the hypothesis poses.
KlResult kl_divergence(const BeliefState& post, const BeliefState& pre, const HypothesisSet& hyp);

/// CSV rows "t,j,px,py,pz,qw,qx,qy,qz,w".
void write_belief_csv_header(std::ostream& os);
void write_belief_csv(std::ostream& os, int t, const BeliefState& b);

}  // namespace hbgrasp
