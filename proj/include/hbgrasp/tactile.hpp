#pragma once

#include "hbgrasp/contact.hpp"

#include <set>
#include <string>
#include <vector>

namespace hbgrasp {

enum class Aggregation { Product, Sum, Max };

Aggregation aggregation_from_string(const std::string& s);
std::string to_string(Aggregation a);

struct TactileParams {
    double eta = 1.0;
    double lambda = 40.0;  // 1/m
    double d_max = 0.05;   // m
    Aggregation aggregation = Aggregation::Product;

    void validate() const;
};

/// eta * exp(-lambda d) when d <= d_max and the normals oppose, else 0.
double phi_value(double d, double normal_dot, const TactileParams& p);

/// Per-finger distance to a hypothesis cloud and the opposition of the
/// fingertip's inward normal to the surface normal nearest the fingertip.
struct FingerReading {
    double distance = 0.0;
    double normal_dot = 0.0;
};

std::vector<FingerReading> finger_readings(const RobotGeometry& g, const FkResult& fk, const PlacedCloud& hyp);

double phi(const RobotGeometry& g, const Eigen::VectorXd& q, int finger, const PlacedCloud& hyp, const TactileParams& p);

/// Aggregation of phi over fingers (product by default).
double aggregate(const std::vector<double>& phis, Aggregation a);
double expected_observation(const RobotGeometry& g, const FkResult& fk, const PlacedCloud& hyp, const TactileParams& p);
double expected_observation(const RobotGeometry& g, const Eigen::VectorXd& q, const PlacedCloud& hyp,
                            const TactileParams& p);

/// Likelihood of observing contact on exactly the given links. Fingers use
/// phi; a bound-carrying hand link outside every finger (the palm) senses
/// contact with eta * exp(-lambda d) and no normal test.
double contact_likelihood(const RobotGeometry& g, const Eigen::VectorXd& q_at_contact, const std::set<int>& contacted_links,
                          const PlacedCloud& hyp, const TactileParams& p);

}  // namespace hbgrasp
