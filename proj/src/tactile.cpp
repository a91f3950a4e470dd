#include "hbgrasp/tactile.hpp"

#include "hbgrasp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hbgrasp {

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "product") return Aggregation::Product;
    if (s == "sum") return Aggregation::Sum;
    if (s == "max") return Aggregation::Max;
    throw InvalidArgument("unknown aggregation '" + s + "' (expected product, sum or max)");
}

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::Product: return "product";
        case Aggregation::Sum: return "sum";
        case Aggregation::Max: return "max";
    }
    return "product";
}

void TactileParams::validate() const {
    if (!(eta > 0.0)) throw InvalidArgument("eta must be > 0");
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be > 0");
    if (!(d_max > 0.0)) throw InvalidArgument("d_max must be > 0");
}

double phi_value(double d, double normal_dot, const TactileParams& p) {
    if (!(d <= p.d_max) || !(normal_dot < 0.0)) return 0.0;
    return p.eta * std::exp(-p.lambda * d);
}

std::vector<FingerReading> finger_readings(const RobotGeometry& g, const FkResult& fk, const PlacedCloud& hyp) {
    const RobotModel& r = g.robot();
    const Pose6D to_model = inverse(hyp.pose);
    std::vector<FingerReading> out(static_cast<std::size_t>(r.finger_count()));
    for (int f = 0; f < r.finger_count(); ++f) {
        double d = std::numeric_limits<double>::infinity();
        for (int l : r.finger_links(f)) {
            if (r.link(l).bound) d = std::min(d, g.clearance(fk, l, hyp).d_obs);
        }
        out[f].distance = d;
        if (!std::isfinite(d)) continue;
        const Pose6D& tip = fk.fingertips[f];
        const int tl = r.fingertip_link(f);
        const Vec3 inward = fk.links[tl].rotate(r.link(tl).fingertip->inward_normal);
        const auto nn = hyp.model->index().knn(to_model.transform_point(tip.position()), 1);
        const Vec3 surface = hyp.pose.rotate((*hyp.model)[nn.front().index].normal);
        out[f].normal_dot = inward.dot(surface);
    }
    return out;
}

double phi(const RobotGeometry& g, const Eigen::VectorXd& q, int finger, const PlacedCloud& hyp, const TactileParams& p) {
    if (finger < 0 || finger >= g.robot().finger_count()) throw InvalidArgument("phi: finger index out of range");
    const auto readings = finger_readings(g, fk_links(g.robot(), q), hyp);
    return phi_value(readings[finger].distance, readings[finger].normal_dot, p);
}

double aggregate(const std::vector<double>& phis, Aggregation a) {
    if (phis.empty()) return 0.0;
    switch (a) {
        case Aggregation::Product: return std::accumulate(phis.begin(), phis.end(), 1.0, std::multiplies<>());
        case Aggregation::Sum: return std::accumulate(phis.begin(), phis.end(), 0.0);
        case Aggregation::Max: return *std::max_element(phis.begin(), phis.end());
    }
    return 0.0;
}

double expected_observation(const RobotGeometry& g, const FkResult& fk, const PlacedCloud& hyp, const TactileParams& p) {
    std::vector<double> phis;
    for (const auto& rd : finger_readings(g, fk, hyp)) phis.push_back(phi_value(rd.distance, rd.normal_dot, p));
    return aggregate(phis, p.aggregation);
}

double expected_observation(const RobotGeometry& g, const Eigen::VectorXd& q, const PlacedCloud& hyp,
                            const TactileParams& p) {
    return expected_observation(g, fk_links(g.robot(), q), hyp, p);
}

double contact_likelihood(const RobotGeometry& g, const Eigen::VectorXd& q_at_contact, const std::set<int>& contacted_links,
                          const PlacedCloud& hyp, const TactileParams& p) {
    const RobotModel& r = g.robot();
    const FkResult fk = fk_links(r, q_at_contact);
    const auto readings = finger_readings(g, fk, hyp);
    double lik = 1.0;
    for (int f = 0; f < r.finger_count(); ++f) {
        const auto& links = r.finger_links(f);
        const bool touched = std::any_of(links.begin(), links.end(), [&](int l) { return contacted_links.contains(l); });
        const double ph = phi_value(readings[f].distance, readings[f].normal_dot, p);
        lik *= touched ? ph : std::max(0.0, 1.0 - ph);
    }
    for (int l : r.hand_bound_links()) {
        if (r.link(l).finger >= 0) continue;
        const double d = g.clearance(fk, l, hyp).d_obs;
        const double psi = d <= p.d_max ? p.eta * std::exp(-p.lambda * d) : 0.0;
        lik *= contacted_links.contains(l) ? psi : std::max(0.0, 1.0 - psi);
    }
    return lik;
}

}  // namespace hbgrasp
