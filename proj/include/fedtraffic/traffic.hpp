#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

namespace fedtraffic {

// Arc-length parameterization of a single one-way lane shaped as a figure
// eight. The lane crosses itself once; arc positions c and c + L/2 map to the
// same physical crossing.
struct TrackGeometry {
    double loop_radius = 0.0;
    double total_length = 0.0;
    std::array<double, 2> conflict_centers{};
    double conflict_half_length = 0.0;

    // Arc position where conflict interval `side` begins.
    double conflict_entry(int side) const;
    // (pos - origin) reduced into [0, total_length).
    double forward_distance(double origin, double pos) const;
    double wrap(double pos) const;
};

TrackGeometry build_figure_eight(double loop_radius, double conflict_half_length);

struct IdmParams {
    double v0 = 8.0;
    double time_headway = 1.0;
    double a_max = 1.0;
    double b_comfort = 1.5;
    double delta = 4.0;
    double s0 = 2.0;
};

void validate(const IdmParams& p);

// Intelligent Driver Model acceleration, clamped to [-b_emergency, a_max].
// Requires gap > 0; a closed gap is a crash and is handled by the caller.
double idm_acceleration(double v, double v_lead, double gap, const IdmParams& p,
                        double b_emergency);

struct TrafficParams {
    double loop_radius = 30.0;
    double conflict_half_length = 5.0;
    double vehicle_length = 5.0;
    double v_max = 8.0;
    double b_emergency = 9.0;
    double crash_threshold = 0.1;
    double lookahead = 3.0;       // s, gate horizon
    double r_crash = 10.0;
    double dt = 0.1;
    int max_steps = 1500;
    int vehicle_count = 14;
    int learner_count = 7;
    double placement_jitter = 1.0; // m, uniform in [-j, +j]
    IdmParams idm{};
};

struct Controller {
    enum class Kind { Baseline, Learner };
    Kind kind = Kind::Baseline;
    int agent = -1;

    static Controller baseline() { return {}; }
    static Controller learner(int agent) { return {Kind::Learner, agent}; }
    bool is_learner() const { return kind == Kind::Learner; }
    friend bool operator==(const Controller&, const Controller&) = default;
};

struct VehicleState {
    int id = 0;
    double arc_pos = 0.0; // front bumper
    double speed = 0.0;
    double length = 5.0;
    Controller controller{};

    friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct WorldState {
    std::vector<VehicleState> vehicles; // arc-length order
    double sim_time = 0.0;
    std::int64_t step_index = 0;
    int epoch_index = 0;
    bool crashed = false;

    const VehicleState& vehicle(int id) const;
    friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct Neighbors {
    const VehicleState* ahead = nullptr;
    double gap_ahead = 0.0;
    const VehicleState* behind = nullptr;
    double gap_behind = 0.0;
};

using Observation = std::array<double, 6>;

// Accelerations indexed by vehicle id; an empty slot is a missing command.
using Controls = std::vector<std::optional<double>>;

class Traffic {
public:
    explicit Traffic(TrafficParams params = {});

    const TrackGeometry& geometry() const { return geom_; }
    const TrafficParams& params() const { return params_; }

    Neighbors neighbors(const WorldState& world, int id) const;

    // Ids that must treat their next conflict-interval entry as a stopped
    // leader. Priority goes to occupants, then vehicles that can no longer
    // stop before the entry, then the smallest time-to-entry (ties: lower id).
    // Every approacher on the opposite interval to the winner is gated.
    std::set<int> intersection_gate(const WorldState& world) const;

    // Distance from the front bumper to the entry of the conflict interval
    // the vehicle reaches next, or nullopt when it is inside one.
    std::optional<double> distance_to_entry(const VehicleState& v) const;
    bool occupies(const VehicleState& v, int side) const;

    WorldState step(const WorldState& world, const Controls& accel) const;
    // Same, with a gate already computed for `world`.
    WorldState step(const WorldState& world, const Controls& accel,
                    const std::set<int>& gated) const;

    Observation observe(const WorldState& world, int vehicle_id) const;
    double reward(const WorldState& before, const WorldState& after) const;
    WorldState reset_epoch(std::uint64_t seed, int epoch_index = 0) const;

    // IDM commands for every Baseline vehicle, honoring the gate.
    void baseline_controls(const WorldState& world, const std::set<int>& gated,
                           Controls& out) const;

    double mean_speed(const WorldState& world) const;

private:
    struct Leader {
        double gap;
        double speed;
    };
    Leader effective_leader(const VehicleState& self, const Neighbors& nb,
                            const std::set<int>& gated) const;
    bool needs_emergency_brake(double v, double a, const Leader& lead) const;

    TrafficParams params_;
    TrackGeometry geom_;
};

} // namespace fedtraffic
