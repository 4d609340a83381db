#include "mesoacc/flowstats.hpp"

#include <algorithm>
#include <cmath>

namespace mesoacc {

double variation_coefficient(std::span<const double> speeds) {
    if (speeds.empty()) return 0.0;
    double mean = 0.0;
    for (double v : speeds) mean += v;
    mean /= static_cast<double>(speeds.size());
    if (!(mean > 0.0)) return 0.0;
    double var = 0.0;
    for (double v : speeds) var += (v - mean) * (v - mean);
    var /= static_cast<double>(speeds.size());
    return std::sqrt(var) / mean;
}

double flow_z(const SampleWindow& integrand, double gain, double window, double t) {
    if (integrand.empty()) return 0.0;
    return gain * integrand.integral(t, window);
}

double headway_scale(double z, double floor, double cap) {
    return std::clamp(1.0 + z, floor, cap);
}

void FlowStatistic::update(double t, std::span<const double> speeds, double own,
                           const VehicleParams& p) {
    vcoef = variation_coefficient(speeds);
    double sign = 0.0;
    if (!speeds.empty()) {
        double mean = 0.0;
        for (double v : speeds) mean += v;
        mean /= static_cast<double>(speeds.size());
        if (own > mean) sign = 1.0;
        else if (own < mean) sign = -1.0;
    }
    integrand.push(t, vcoef * sign);
    integrand.trim(t, p.flow_window + 1.0);
    z = flow_z(integrand, p.flow_gain, p.flow_window, t);
    alpha = headway_scale(z, p.alpha_floor, p.alpha_cap);
}

} // namespace mesoacc
