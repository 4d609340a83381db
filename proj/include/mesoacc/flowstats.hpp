#pragma once

#include <span>

#include "mesoacc/maneuver.hpp"
#include "mesoacc/types.hpp"

namespace mesoacc {

// Population coefficient of variation of the given speeds. Degenerate
// inputs (empty set, single vehicle, zero mean) contribute nothing.
double variation_coefficient(std::span<const double> speeds);

// Flow integral: gain times the windowed integral of the signed variation
// coefficient samples.
double flow_z(const SampleWindow& integrand, double gain, double window, double t);

// Headway scale alpha = sat(1 + z), saturated to [floor, cap].
double headway_scale(double z, double floor, double cap);

// Rolling flow statistics of one vehicle for one lane.
struct FlowStatistic {
    double alpha = 1.0;
    double z = 0.0;
    double vcoef = 0.0;
    SampleWindow integrand;

    // speeds: ahead-set speeds in the lane under consideration; own: the
    // vehicle's own speed.
    void update(double t, std::span<const double> speeds, double own,
                const VehicleParams& p);
};

} // namespace mesoacc
