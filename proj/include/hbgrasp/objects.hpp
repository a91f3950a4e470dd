#pragma once

#include "hbgrasp/cloud.hpp"

#include <map>
#include <string>
#include <vector>

namespace hbgrasp {

using ObjectParams = std::map<std::string, double>;

/// Names accepted by make_object.
const std::vector<std::string>& object_kinds();

/// Dense synthetic cloud with analytic outward normals. The model frame has
/// its origin at the centre of the object's footprint with z up.
///
/// Common parameter: density (points per m^2, default 100000) and seed.
/// box: sx sy sz (default 0.1 each), points_per_face overrides density.
/// cylinder: radius 0.04, height 0.15, caps 1.
/// bottle: radius 0.033, height 0.2, neck_radius 0.012.
/// jug: radius 0.04, height 0.16, handle_radius 0.045, handle_tube 0.008.
/// stapler: length 0.16, width 0.045.
/// spray: radius 0.035, height 0.18.
/// lshape: long 0.12, short 0.10, width 0.04, height 0.06.
/// Unknown parameters and unknown kinds throw.
PointCloudModel make_object(const std::string& kind, const ObjectParams& params = {});

}  // namespace hbgrasp
