#include "fedtraffic/traffic.hpp"

#include "fedtraffic/errors.hpp"
#include "fedtraffic/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace fedtraffic {

namespace {

// Speed floor used for time-to-entry so that stopped vehicles waiting at the
// line still register as approachers.
constexpr double kGateSpeedFloor = 1.0;

} // namespace

double TrackGeometry::wrap(double pos) const {
    if (pos >= 0.0 && pos < total_length) return pos;
    if (pos < 0.0 && pos >= -total_length) {
        const double r = pos + total_length;
        return r < total_length ? r : 0.0;
    }
    if (pos >= total_length && pos < 2.0 * total_length) return pos - total_length;
    double r = std::fmod(pos, total_length);
    if (r < 0.0) r += total_length;
    if (r >= total_length) r = 0.0;
    return r;
}

double TrackGeometry::forward_distance(double origin, double pos) const {
    return wrap(pos - origin);
}

double TrackGeometry::conflict_entry(int side) const {
    return wrap(conflict_centers[static_cast<std::size_t>(side)] - conflict_half_length);
}

TrackGeometry build_figure_eight(double loop_radius, double conflict_half_length) {
    if (!(loop_radius > 0.0) || !std::isfinite(loop_radius))
        throw InvalidGeometry("loop_radius must be positive, got " + std::to_string(loop_radius));
    // A zero half length is the degenerate point-crossing limit and is allowed.
    if (!(conflict_half_length >= 0.0) ||
        !(conflict_half_length < std::numbers::pi * loop_radius / 2.0))
        throw InvalidGeometry("conflict_half_length must lie in [0, pi*r/2), got " +
                              std::to_string(conflict_half_length));
    TrackGeometry g;
    g.loop_radius = loop_radius;
    g.total_length = 2.0 * 2.0 * std::numbers::pi * loop_radius;
    g.conflict_centers = {0.0, g.total_length / 2.0};
    g.conflict_half_length = conflict_half_length;
    return g;
}

void validate(const IdmParams& p) {
    if (!(p.v0 > 0 && p.time_headway > 0 && p.a_max > 0 && p.b_comfort > 0 && p.s0 > 0 &&
          p.delta >= 1.0))
        throw std::invalid_argument("IDM parameters must be positive with delta >= 1");
}

double idm_acceleration(double v, double v_lead, double gap, const IdmParams& p,
                        double b_emergency) {
    if (!(gap > 0.0))
        throw std::domain_error("idm_acceleration requires a positive gap");
    const double interaction = v * (v - v_lead) / (2.0 * std::sqrt(p.a_max * p.b_comfort));
    const double s_star = p.s0 + std::max(0.0, v * p.time_headway + interaction);
    const double ratio = s_star / gap;
    const double a = p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - ratio * ratio);
    return std::clamp(a, -b_emergency, p.a_max);
}

const VehicleState& WorldState::vehicle(int id) const {
    for (const auto& v : vehicles)
        if (v.id == id) return v;
    throw LookupError("no vehicle with id " + std::to_string(id));
}

Traffic::Traffic(TrafficParams params)
    : params_(params),
      geom_(build_figure_eight(params.loop_radius, params.conflict_half_length)) {
    validate(params_.idm);
    if (params_.vehicle_count < 2)
        throw std::invalid_argument("vehicle_count must be at least 2");
    if (params_.learner_count < 0 || 2 * params_.learner_count > params_.vehicle_count)
        throw std::invalid_argument("learner_count must be in [0, vehicle_count/2]");
    if (!(params_.dt > 0) || params_.max_steps < 1)
        throw std::invalid_argument("dt and max_steps must be positive");
    if (!(params_.v_max > 0 && params_.b_emergency > 0 && params_.crash_threshold >= 0 &&
          params_.vehicle_length > 0 && params_.lookahead >= 0))
        throw std::invalid_argument("traffic parameters out of range");
    const double spacing = geom_.total_length / params_.vehicle_count;
    if (!(params_.placement_jitter >= 0) ||
        !(2.0 * params_.placement_jitter + params_.vehicle_length < spacing))
        throw std::invalid_argument("placement_jitter too large for the vehicle spacing");
}

Neighbors Traffic::neighbors(const WorldState& world, int id) const {
    if (world.vehicles.size() < 2) throw LookupError("neighbors requires at least 2 vehicles");
    const VehicleState& self = world.vehicle(id);
    const double L = geom_.total_length;
    Neighbors out;
    double best_ahead = 0.0;
    double best_behind = 0.0;
    for (const auto& other : world.vehicles) {
        if (other.id == id) continue;
        // Positions are already reduced, so one correction suffices.
        double fwd = other.arc_pos - self.arc_pos;
        if (fwd < 0.0) fwd += L;
        if (fwd >= L) fwd = 0.0;
        const double back = fwd > 0.0 ? L - fwd : 0.0;
        if (out.ahead == nullptr || fwd < best_ahead) {
            out.ahead = &other;
            best_ahead = fwd;
        }
        if (out.behind == nullptr || back < best_behind) {
            out.behind = &other;
            best_behind = back;
        }
    }
    out.gap_ahead = std::max(0.0, best_ahead - out.ahead->length);
    out.gap_behind = std::max(0.0, best_behind - self.length);
    return out;
}

bool Traffic::occupies(const VehicleState& v, int side) const {
    const double h = geom_.conflict_half_length;
    if (h <= 0.0) return false;
    const double past_entry = geom_.forward_distance(geom_.conflict_entry(side), v.arc_pos);
    return past_entry > 0.0 && past_entry < 2.0 * h + v.length;
}

std::optional<double> Traffic::distance_to_entry(const VehicleState& v) const {
    if (occupies(v, 0) || occupies(v, 1)) return std::nullopt;
    return std::min(geom_.forward_distance(v.arc_pos, geom_.conflict_entry(0)),
                    geom_.forward_distance(v.arc_pos, geom_.conflict_entry(1)));
}

std::set<int> Traffic::intersection_gate(const WorldState& world) const {
    std::set<int> gated;
    if (geom_.conflict_half_length <= 0.0) return gated;

    struct Candidate {
        int rank; // 0 occupant, 1 committed, 2 approacher
        double tte;
        int id;
        int side;
    };
    std::vector<Candidate> cands;
    for (const auto& v : world.vehicles) {
        bool inside = false;
        for (int side = 0; side < 2; ++side) {
            if (occupies(v, side)) {
                cands.push_back({0, 0.0, v.id, side});
                inside = true;
            }
        }
        if (inside) continue;
        const double d0 = geom_.forward_distance(v.arc_pos, geom_.conflict_entry(0));
        const double d1 = geom_.forward_distance(v.arc_pos, geom_.conflict_entry(1));
        const int side = d0 <= d1 ? 0 : 1;
        const double d = std::min(d0, d1);
        const double tte = d / std::max(v.speed, kGateSpeedFloor);
        const double stopping =
            v.speed * v.speed / (2.0 * params_.b_emergency) + v.speed * params_.dt;
        if (stopping >= d)
            cands.push_back({1, tte, v.id, side});
        else if (tte <= params_.lookahead)
            cands.push_back({2, tte, v.id, side});
    }
    if (cands.empty()) return gated;

    const auto winner = std::min_element(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
        if (a.rank != b.rank) return a.rank < b.rank;
        if (a.tte != b.tte) return a.tte < b.tte;
        return a.id < b.id;
    });
    for (const auto& c : cands)
        if (c.side != winner->side && c.rank > 0) gated.insert(c.id);
    return gated;
}

Traffic::Leader Traffic::effective_leader(const VehicleState& self, const Neighbors& nb,
                                          const std::set<int>& gated) const {
    Leader lead{nb.gap_ahead, nb.ahead->speed};
    if (gated.contains(self.id)) {
        if (auto d = distance_to_entry(self); d && *d < lead.gap) lead = {*d, 0.0};
    }
    return lead;
}

bool Traffic::needs_emergency_brake(double v, double a, const Leader& lead) const {
    const double dt = params_.dt;
    const double v_next = std::clamp(v + a * dt, 0.0, params_.v_max);
    if (v_next <= 0.0) return false;
    const double lead_next = std::max(0.0, lead.speed - params_.b_emergency * dt);
    const double gap_next = lead.gap + lead_next * dt - v_next * dt;
    // Discrete braking of the leader may fall short of the continuous stopping
    // distance by up to half a step of travel.
    const double margin = params_.crash_threshold + 0.5 * params_.v_max * dt;
    const double room = gap_next - margin;
    if (v_next <= lead_next) return room < 0.0 && gap_next < params_.crash_threshold;
    if (room <= 0.0) return true;
    const double required = (v_next * v_next - lead_next * lead_next) / (2.0 * room);
    return required > params_.b_emergency;
}

WorldState Traffic::step(const WorldState& world, const Controls& accel) const {
    return step(world, accel, intersection_gate(world));
}

WorldState Traffic::step(const WorldState& world, const Controls& accel,
                         const std::set<int>& gated) const {
    if (world.crashed) throw std::logic_error("step called on a crashed world");
    const std::size_t n = world.vehicles.size();

    std::vector<double> displacement(n);
    std::vector<double> gap_before(n);
    std::vector<std::size_t> ahead_index(n);
    WorldState next = world;

    for (std::size_t i = 0; i < n; ++i) {
        const VehicleState& v = world.vehicles[i];
        const auto id = static_cast<std::size_t>(v.id);
        if (v.id < 0 || id >= accel.size() || !accel[id].has_value())
            throw IncompleteControl("missing acceleration for vehicle " + std::to_string(v.id));
        double a = *accel[id];
        if (!std::isfinite(a))
            throw IncompleteControl("non-finite acceleration for vehicle " + std::to_string(v.id));
        a = std::max(a, -params_.b_emergency);

        const Neighbors nb = neighbors(world, v.id);
        const Leader lead = effective_leader(v, nb, gated);
        if (needs_emergency_brake(v.speed, a, lead)) a = -params_.b_emergency;

        const double v_next = std::clamp(v.speed + a * params_.dt, 0.0, params_.v_max);
        displacement[i] = v_next * params_.dt;
        next.vehicles[i].speed = v_next;
        next.vehicles[i].arc_pos = geom_.wrap(v.arc_pos + displacement[i]);

        ahead_index[i] = static_cast<std::size_t>(nb.ahead - world.vehicles.data());
        gap_before[i] = geom_.forward_distance(v.arc_pos, nb.ahead->arc_pos) - nb.ahead->length;
    }

    bool crashed = false;
    for (std::size_t i = 0; i < n && !crashed; ++i) {
        const double gap = gap_before[i] + displacement[ahead_index[i]] - displacement[i];
        if (gap < params_.crash_threshold) crashed = true;
    }
    if (!crashed) {
        bool side0 = false;
        bool side1 = false;
        for (const auto& v : next.vehicles) {
            side0 = side0 || occupies(v, 0);
            side1 = side1 || occupies(v, 1);
        }
        crashed = side0 && side1;
    }

    next.crashed = crashed;
    next.step_index = world.step_index + 1;
    next.sim_time = static_cast<double>(next.step_index) * params_.dt;
    return next;
}

Observation Traffic::observe(const WorldState& world, int vehicle_id) const {
    const VehicleState& self = world.vehicle(vehicle_id);
    const Neighbors nb = neighbors(world, vehicle_id);
    const double L = geom_.total_length;
    const double vmax = params_.v_max;
    return {self.arc_pos / L,  self.speed / vmax,        nb.gap_ahead / L,
            nb.ahead->speed / vmax, nb.gap_behind / L, nb.behind->speed / vmax};
}

double Traffic::mean_speed(const WorldState& world) const {
    double sum = 0.0;
    for (const auto& v : world.vehicles) sum += v.speed;
    return world.vehicles.empty() ? 0.0 : sum / static_cast<double>(world.vehicles.size());
}

double Traffic::reward(const WorldState& /*before*/, const WorldState& after) const {
    double r = mean_speed(after) / params_.v_max;
    if (after.crashed) r -= params_.r_crash;
    return r;
}

WorldState Traffic::reset_epoch(std::uint64_t seed, int epoch_index) const {
    Rng rng(seed);
    WorldState w;
    w.epoch_index = epoch_index;
    const int n = params_.vehicle_count;
    const double spacing = geom_.total_length / n;
    int next_agent = 0;
    for (int i = 0; i < n; ++i) {
        VehicleState v;
        v.id = i;
        v.length = params_.vehicle_length;
        // Half-spacing offset keeps every vehicle clear of both conflict intervals.
        const double jitter = params_.placement_jitter * (2.0 * rng.uniform01() - 1.0);
        v.arc_pos = geom_.wrap((i + 0.5) * spacing + jitter);
        if (i % 2 == 1 && next_agent < params_.learner_count)
            v.controller = Controller::learner(next_agent++);
        w.vehicles.push_back(v);
    }
    return w;
}

void Traffic::baseline_controls(const WorldState& world, const std::set<int>& gated,
                                Controls& out) const {
    out.resize(world.vehicles.size());
    for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
        const VehicleState& v = world.vehicles[i];
        if (v.controller.is_learner()) continue;
        const Leader lead = effective_leader(v, neighbors(world, v.id), gated);
        const double a = lead.gap > 0.0
                             ? idm_acceleration(v.speed, lead.speed, lead.gap, params_.idm,
                                                params_.b_emergency)
                             : -params_.b_emergency;
        out[static_cast<std::size_t>(v.id)] = a;
    }
}

} // namespace fedtraffic
