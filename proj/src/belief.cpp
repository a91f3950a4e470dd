#include "hbgrasp/belief.hpp"

#include "hbgrasp/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

namespace hbgrasp {

namespace {

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

BeliefState::BeliefState(std::vector<Particle> particles, const SE3Kernel& kernel)
    : particles_(std::move(particles)), kernel_(kernel) {
    kernel_.validate();
    if (particles_.empty()) throw InvalidArgument("belief needs at least one particle");
    double sum = 0.0;
    for (const auto& p : particles_) {
        if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) throw InvalidArgument("particle weights must be finite and >= 0");
        sum += p.weight;
    }
    if (!(sum > 0.0)) throw InvalidArgument("particle weights sum to zero");
    for (auto& p : particles_) p.weight /= sum;
}

double density(const BeliefState& b, const Pose6D& y) {
    double s = 0.0;
    for (const auto& p : b.particles()) s += p.weight * kernel_eval(y, p.pose, b.kernel());
    return s;
}

double log_density(const BeliefState& b, const Pose6D& y) {
    std::vector<double> terms;
    terms.reserve(b.size());
    for (const auto& p : b.particles()) {
        terms.push_back(p.weight > 0.0 ? std::log(p.weight) + log_kernel_eval(y, p.pose, b.kernel())
                                       : -std::numeric_limits<double>::infinity());
    }
    return log_sum_exp(terms);
}

std::size_t mle_index(const BeliefState& b) {
    std::size_t best = 0;
    double best_ld = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) {
        const double ld = log_density(b, b.particles()[j].pose);
        if (ld > best_ld) {
            best_ld = ld;
            best = j;
        }
    }
    return best;
}

Pose6D mle(const BeliefState& b) { return b.particles()[mle_index(b)].pose; }

HypothesisSet subsample_hypotheses(const BeliefState& b, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw InvalidArgument("subsample_hypotheses: k must be >= 2");
    HypothesisSet h;
    h.poses.reserve(k);
    h.poses.push_back(mle(b));
    Rng rng(seed);
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& p : b.particles()) cdf.push_back(acc += p.weight);
    for (std::size_t i = 1; i < k; ++i) {
        const double u = rng.uniform() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        h.poses.push_back(b.particles()[static_cast<std::size_t>(it - cdf.begin())].pose);
    }
    return h;
}

Pose6D perturb_pose(const Pose6D& p, const Vec3& sigma_pos, double sigma_rot, Rng& rng) {
    Vec3 dp;
    for (int i = 0; i < 3; ++i) dp[i] = rng.normal(0.0, sigma_pos[i]);
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    while (axis.norm() < 1e-12) axis = Vec3(rng.normal(), rng.normal(), rng.normal());
    const double angle = std::abs(rng.normal(0.0, sigma_rot));
    const Quat dq(Eigen::AngleAxisd(angle, axis.normalized()));
    return {p.position() + dp, dq * p.orientation()};
}

std::vector<std::size_t> low_variance_resample(const std::vector<double>& weights, std::size_t n, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw InvalidArgument("low_variance_resample: weights sum to zero");
    std::vector<std::size_t> out;
    out.reserve(n);
    const double step = total / static_cast<double>(n);
    const double start = rng.uniform() * step;
    std::size_t j = 0;
    double c = weights[0];
    for (std::size_t m = 0; m < n; ++m) {
        const double u = start + static_cast<double>(m) * step;
        while (u > c && j + 1 < weights.size()) c += weights[++j];
        out.push_back(j);
    }
    return out;
}

BeliefState sample_kde(const BeliefState& b, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("sample_kde: n must be >= 1");
    Rng rng(seed);
    std::vector<double> w;
    for (const auto& p : b.particles()) w.push_back(p.weight);
    std::vector<Particle> out;
    out.reserve(n);
    for (std::size_t j : low_variance_resample(w, n, rng)) {
        out.push_back({perturb_pose(b.particles()[j].pose, b.kernel().sigma_pos, b.kernel().sigma_rot, rng), 1.0});
    }
    return {std::move(out), b.kernel()};
}

void Jitter::validate() const {
    if (!(sigma_pos >= 0.0) || !(sigma_rot >= 0.0)) throw InvalidArgument("jitter sigmas must be >= 0");
}

UpdateResult update(const BeliefState& b, const std::vector<double>& likelihood, std::size_t n_out, std::uint64_t seed,
                    const Jitter& jitter) {
    if (likelihood.size() != b.size()) throw InvalidArgument("update: one likelihood per particle required");
    if (n_out == 0) throw InvalidArgument("update: n_out must be >= 1");
    jitter.validate();
    std::vector<double> w(b.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
        if (!(likelihood[j] >= 0.0) || !std::isfinite(likelihood[j])) {
            throw InvalidArgument("update: likelihoods must be finite and >= 0");
        }
        w[j] = likelihood[j] * b.particles()[j].weight;
        sum += w[j];
    }
    UpdateResult res;
    if (!(sum > 0.0)) {
        res.degenerate = true;
        std::fill(w.begin(), w.end(), 1.0);
    }
    Rng rng(seed);
    std::vector<Particle> out;
    out.reserve(n_out);
    for (std::size_t j : low_variance_resample(w, n_out, rng)) {
        out.push_back({perturb_pose(b.particles()[j].pose, Vec3::Constant(jitter.sigma_pos), jitter.sigma_rot, rng), 1.0});
    }
    res.belief = BeliefState(std::move(out), b.kernel());
    return res;
}

KlResult kl_from_log_weights(const std::vector<double>& log_post, const std::vector<double>& log_pre) {
    if (log_post.size() != log_pre.size() || log_post.empty()) throw InvalidArgument("kl: size mismatch");
    const double zp = log_sum_exp(log_post);
    const double zq = log_sum_exp(log_pre);
    if (!std::isfinite(zp) || !std::isfinite(zq)) throw InvalidArgument("kl: a distribution has no mass");
    const double log_eps = std::log(1e-12);
    KlResult r;
    for (std::size_t i = 0; i < log_post.size(); ++i) {
        const double lp = log_post[i] - zp;
        if (!std::isfinite(lp)) continue;  // zero post mass contributes nothing
        double lq = log_pre[i] - zq;
        if (lq < log_eps) {
            lq = log_eps;
            r.clamped = true;
        }
        r.value += std::exp(lp) * (lp - lq);
    }
    r.value = std::max(0.0, r.value);
    return r;
}

KlResult kl_divergence(const BeliefState& post, const BeliefState& pre, const HypothesisSet& hyp) {
    std::vector<double> lp, lq;
    for (const auto& y : hyp.poses) {
        lp.push_back(log_density(post, y));
        lq.push_back(log_density(pre, y));
    }
    return kl_from_log_weights(lp, lq);
}

void write_belief_csv_header(std::ostream& os) { os << "t,j,px,py,pz,qw,qx,qy,qz,w\n"; }

void write_belief_csv(std::ostream& os, int t, const BeliefState& b) {
    const auto old = os.precision(std::numeric_limits<double>::max_digits10);
    for (std::size_t j = 0; j < b.size(); ++j) {
        os << t << ',' << j;
        for (double v : b.particles()[j].pose.to_array()) os << ',' << v;
        os << ',' << b.particles()[j].weight << '\n';
    }
    os.precision(old);
}

}  // namespace hbgrasp
