#pragma once

#include "fedtraffic/traffic.hpp"

#include <utility>
#include <vector>

namespace fedtraffic::test {

// Vehicles with ids 0..n-1 at the given (arc_pos, speed), all Baseline.
inline WorldState world_of(const std::vector<std::pair<double, double>>& pos_speed, double length = 5.0) {
    WorldState w;
    int id = 0;
    for (auto [pos, speed] : pos_speed) {
        VehicleState v;
        v.id = id++;
        v.arc_pos = pos;
        v.speed = speed;
        v.length = length;
        w.vehicles.push_back(v);
    }
    return w;
}

inline Controls uniform_controls(std::size_t n, double a) { return Controls(n, a); }

} // namespace fedtraffic::test
