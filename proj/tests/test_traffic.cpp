#include "helpers.hpp"

#include "fedtraffic/errors.hpp"
#include "fedtraffic/rng.hpp"
#include "fedtraffic/traffic.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace fedtraffic;
using fedtraffic::test::uniform_controls;
using fedtraffic::test::world_of;

namespace {

TrafficParams no_jitter() {
    TrafficParams p;
    p.placement_jitter = 0.0;
    return p;
}

// Cyclic id order starting from the lowest id.
std::vector<int> cyclic_order(const WorldState& w) {
    std::vector<std::pair<double, int>> v;
    for (const auto& x : w.vehicles) v.emplace_back(x.arc_pos, x.id);
    std::sort(v.begin(), v.end());
    std::vector<int> ids;
    for (auto& [p, id] : v) ids.push_back(id);
    std::rotate(ids.begin(), std::min_element(ids.begin(), ids.end()), ids.end());
    return ids;
}

} // namespace

TEST_SUITE("geometry") {
    TEST_CASE("figure eight length and conflict centers") {
        const auto g = build_figure_eight(30.0, 5.0);
        CHECK(g.total_length == doctest::Approx(4.0 * std::numbers::pi * 30.0));
        CHECK(g.total_length == doctest::Approx(376.99).epsilon(1e-4));
        CHECK(g.conflict_centers[0] == 0.0);
        CHECK(g.conflict_centers[1] == doctest::Approx(188.50).epsilon(1e-4));
        CHECK(g.conflict_centers[1] == doctest::Approx(g.total_length / 2));
    }

    TEST_CASE("conflict intervals are disjoint in arc length") {
        const auto g = build_figure_eight(30.0, 5.0);
        const double e0 = g.conflict_entry(0);
        const double e1 = g.conflict_entry(1);
        CHECK(g.forward_distance(e0, e1) > 2 * g.conflict_half_length);
        CHECK(g.forward_distance(e1, e0) > 2 * g.conflict_half_length);
    }

    TEST_CASE("invalid geometry rejected") {
        CHECK_THROWS_AS(build_figure_eight(0.0, 5.0), InvalidGeometry);
        CHECK_THROWS_AS(build_figure_eight(-3.0, 1.0), InvalidGeometry);
        CHECK_THROWS_AS(build_figure_eight(30.0, -1.0), InvalidGeometry);
        CHECK_THROWS_AS(build_figure_eight(30.0, std::numbers::pi * 30.0 / 2.0), InvalidGeometry);
    }

    TEST_CASE("wrap and forward distance stay in range") {
        const auto g = build_figure_eight(30.0, 5.0);
        Rng rng(7);
        for (int i = 0; i < 10000; ++i) {
            const double x = rng.uniform(-3 * g.total_length, 3 * g.total_length);
            const double w = g.wrap(x);
            CHECK(w >= 0.0);
            CHECK(w < g.total_length);
            const double d = g.forward_distance(rng.uniform(0, g.total_length), rng.uniform(0, g.total_length));
            CHECK(d >= 0.0);
            CHECK(d < g.total_length);
        }
    }

    TEST_CASE("zero half length never gates") {
        TrafficParams p;
        p.conflict_half_length = 0.0;
        Traffic t(p);
        const double L = t.geometry().total_length;
        auto w = world_of({{L - 1.0, 5.0}, {L / 2 - 1.0, 5.0}, {1.0, 3.0}});
        CHECK(t.intersection_gate(w).empty());
    }
}

TEST_SUITE("neighbors") {
    TEST_CASE("two vehicles on the track") {
        Traffic t;
        auto w = world_of({{0.0, 0.0}, {100.0, 0.0}});
        const auto nb = t.neighbors(w, 0);
        CHECK(nb.ahead->id == 1);
        CHECK(nb.gap_ahead == doctest::Approx(95.0));
        CHECK(nb.behind->id == 1);
        CHECK(nb.gap_behind == doctest::Approx(t.geometry().total_length - 100.0 - 5.0));
    }

    TEST_CASE("ahead and behind are the same vehicle in a pair") {
        Traffic t;
        auto w = world_of({{50.0, 0.0}, {300.0, 0.0}});
        const auto nb = t.neighbors(w, 1);
        CHECK(nb.ahead == nb.behind);
        CHECK(nb.ahead->id == 0);
    }

    TEST_CASE("fourteen evenly spaced vehicles") {
        Traffic t(no_jitter());
        const auto w = t.reset_epoch(1);
        for (const auto& v : w.vehicles) {
            const auto nb = t.neighbors(w, v.id);
            CHECK(nb.gap_ahead == doctest::Approx(t.geometry().total_length / 14 - 5.0));
            CHECK(nb.gap_ahead == doctest::Approx(21.93).epsilon(1e-3));
        }
    }

    TEST_CASE("unknown id") {
        Traffic t;
        auto w = world_of({{0.0, 0.0}, {100.0, 0.0}});
        CHECK_THROWS_AS(t.neighbors(w, 7), LookupError);
    }
}

TEST_SUITE("idm") {
    TEST_CASE("worked example") {
        IdmParams p;
        p.v0 = 10.0;
        p.delta = 4.0;
        p.a_max = 1.0;
        p.b_comfort = 1.5;
        p.s0 = 2.0;
        p.time_headway = 1.0;
        CHECK(idm_acceleration(5.0, 5.0, 10.0, p, 9.0) == doctest::Approx(0.4475));
    }

    TEST_CASE("free road limit") {
        IdmParams p;
        CHECK(idm_acceleration(0.0, 0.0, 1e6, p, 9.0) == doctest::Approx(p.a_max).epsilon(1e-6));
    }

    TEST_CASE("desired speed equilibrium") {
        IdmParams p;
        const double a = idm_acceleration(p.v0, p.v0, 1e9, p, 9.0);
        CHECK(a <= 0.0);
        CHECK(a > -1e-9);
    }

    TEST_CASE("clamped to emergency deceleration") {
        IdmParams p;
        CHECK(idm_acceleration(8.0, 0.0, 0.5, p, 9.0) == -9.0);
    }

    TEST_CASE("non-positive gap is a domain error") {
        IdmParams p;
        CHECK_THROWS(idm_acceleration(1.0, 1.0, 0.0, p, 9.0));
    }

    TEST_CASE("property: monotone in speed and gap") {
        IdmParams p;
        Rng rng(42);
        for (int i = 0; i < 20000; ++i) {
            const double v = rng.uniform(0, 12), vl = rng.uniform(0, 12), gap = rng.uniform(0.05, 200);
            const double dv = rng.uniform(1e-6, 2), dg = rng.uniform(1e-6, 20);
            const double a = idm_acceleration(v, vl, gap, p, 9.0);
            CHECK(idm_acceleration(v + dv, vl, gap, p, 9.0) <= a);
            CHECK(idm_acceleration(v, vl, gap + dg, p, 9.0) >= a);
        }
    }
}

TEST_SUITE("intersection gate") {
    TEST_CASE("nobody near the crossing") {
        Traffic t;
        const double L = t.geometry().total_length;
        auto w = world_of({{L / 4, 1.0}, {3 * L / 4, 1.0}});
        CHECK(t.intersection_gate(w).empty());
    }

    TEST_CASE("occupant gates the approacher on the other interval") {
        Traffic t;
        const double L = t.geometry().total_length;
        // Vehicle 0 straddles the crossing on interval 0; vehicle 1 is 2 s out on interval 1.
        auto w = world_of({{2.0, 5.0}, {L / 2 - 5.0 - 10.0, 5.0}});
        REQUIRE(t.occupies(w.vehicles[0], 0));
        CHECK(t.intersection_gate(w) == std::set<int>{1});
    }

    TEST_CASE("equal time to entry gates the higher id") {
        Traffic t;
        const double L = t.geometry().total_length;
        WorldState w = world_of({{t.geometry().conflict_entry(0) - 10.0, 5.0}, {L / 2 - 5.0 - 10.0, 5.0}});
        w.vehicles[0].id = 3;
        w.vehicles[1].id = 9;
        CHECK(t.intersection_gate(w) == std::set<int>{9});
    }

    TEST_CASE("larger time to entry is gated") {
        Traffic t;
        const double L = t.geometry().total_length;
        auto w = world_of({{t.geometry().conflict_entry(0) - 12.0, 5.0}, {L / 2 - 5.0 - 10.0, 5.0}});
        CHECK(t.intersection_gate(w) == std::set<int>{0});
    }

    TEST_CASE("gated vehicle stops before the entry") {
        TrafficParams p;
        Traffic t(p);
        const double L = t.geometry().total_length;
        auto w = world_of({{2.0, 1.0}, {L / 2 - 5.0 - 6.0, 3.0}});
        for (int i = 0; i < 200 && !w.crashed; ++i) {
            const auto gated = t.intersection_gate(w);
            Controls c(2);
            // Both press on; only the gate and the brake override hold vehicle 1 back.
            c[0] = 1.0;
            c[1] = 3.0;
            w = t.step(w, c, gated);
        }
        CHECK_FALSE(w.crashed);
    }
}

TEST_SUITE("step") {
    TEST_CASE("stationary world is a fixed point") {
        Traffic t;
        const auto w0 = t.reset_epoch(5);
        const auto w1 = t.step(w0, uniform_controls(14, 0.0));
        CHECK(w1.sim_time == doctest::Approx(0.1));
        CHECK(w1.step_index == 1);
        for (std::size_t i = 0; i < 14; ++i) {
            CHECK(w1.vehicles[i].arc_pos == w0.vehicles[i].arc_pos);
            CHECK(w1.vehicles[i].speed == 0.0);
        }
        CHECK_FALSE(w1.crashed);
    }

    TEST_CASE("commanded deceleration clamps at the emergency limit") {
        Traffic t;
        auto w = world_of({{60.0, 2.0}, {150.0, 0.0}});
        Controls c{-30.0, 0.0};
        const auto w1 = t.step(w, c);
        CHECK(w1.vehicles[0].speed == doctest::Approx(1.1));
        CHECK(w1.vehicles[0].arc_pos == doctest::Approx(60.0 + 0.11));
    }

    TEST_CASE("gap below threshold is a crash") {
        Traffic t;
        auto w = world_of({{100.0, 0.0}, {105.05, 0.0}});
        const auto w1 = t.step(w, uniform_controls(2, 0.0));
        CHECK(w1.crashed);
    }

    TEST_CASE("opposite co-occupancy of the crossing is a crash") {
        Traffic t;
        const double L = t.geometry().total_length;
        auto w = world_of({{2.0, 0.0}, {L / 2 + 2.0, 0.0}});
        CHECK(t.step(w, uniform_controls(2, 0.0), {}).crashed);
    }

    TEST_CASE("missing acceleration") {
        Traffic t;
        auto w = world_of({{100.0, 0.0}, {200.0, 0.0}});
        Controls c(2);
        c[0] = 0.0;
        CHECK_THROWS_AS(t.step(w, c), IncompleteControl);
        CHECK_THROWS_AS(t.step(w, Controls{0.0}), IncompleteControl);
    }

    TEST_CASE("emergency brake prevents a rear-end collision") {
        Traffic t;
        auto w = world_of({{100.0, 8.0}, {115.0, 0.0}});
        Controls c{3.0, 0.0};
        for (int i = 0; i < 50; ++i) {
            w = t.step(w, c, {});
            REQUIRE_FALSE(w.crashed);
        }
        CHECK(w.vehicles[0].speed == 0.0);
    }

    TEST_CASE("property: randomized steps keep the physics invariants") {
        Traffic t;
        const double L = t.geometry().total_length;
        Rng rng(2024);
        for (int epoch = 0; epoch < 20; ++epoch) {
            auto w = t.reset_epoch(rng.next());
            const auto order = cyclic_order(w);
            while (!w.crashed && w.step_index < 1500) {
                Controls c(14);
                for (auto& a : c) a = rng.uniform(-12.0, 4.0);
                w = t.step(w, c);
                REQUIRE(w.vehicles.size() == 14);
                for (const auto& v : w.vehicles) {
                    REQUIRE(std::isfinite(v.arc_pos));
                    REQUIRE(std::isfinite(v.speed));
                    REQUIRE(v.speed >= 0.0);
                    REQUIRE(v.arc_pos >= 0.0);
                    REQUIRE(v.arc_pos < L);
                }
                if (!w.crashed) REQUIRE(cyclic_order(w) == order);
            }
            CHECK(w.step_index <= 1500);
        }
    }

    TEST_CASE("property: identical inputs give identical trajectories") {
        Traffic t;
        auto run = [&] {
            Rng rng(99);
            auto w = t.reset_epoch(3);
            std::vector<WorldState> traj;
            for (int i = 0; i < 300 && !w.crashed; ++i) {
                Controls c(14);
                for (auto& a : c) a = rng.uniform(-3.0, 3.0);
                w = t.step(w, c);
                traj.push_back(w);
            }
            return traj;
        };
        CHECK(run() == run());
    }
}

TEST_SUITE("observe and reward") {
    TEST_CASE("stationary world has zero speed components") {
        Traffic t;
        const auto w = t.reset_epoch(1);
        const auto o = t.observe(w, 3);
        CHECK(o[1] == 0.0);
        CHECK(o[3] == 0.0);
        CHECK(o[5] == 0.0);
    }

    TEST_CASE("position normalization") {
        Traffic t;
        const double L = t.geometry().total_length;
        auto w = world_of({{L / 2, 0.0}, {10.0, 0.0}});
        CHECK(t.observe(w, 0)[0] == doctest::Approx(0.5));
    }

    TEST_CASE("evenly spaced world gives equal gap components") {
        Traffic t(no_jitter());
        const auto w = t.reset_epoch(1);
        const auto o0 = t.observe(w, 0);
        for (const auto& v : w.vehicles) {
            const auto o = t.observe(w, v.id);
            CHECK(o[2] == doctest::Approx(o0[2]));
            CHECK(o[4] == doctest::Approx(o0[4]));
        }
    }

    TEST_CASE("observation components in range") {
        Traffic t;
        Rng rng(8);
        auto w = t.reset_epoch(4);
        for (int i = 0; i < 500 && !w.crashed; ++i) {
            Controls c(14);
            for (auto& a : c) a = rng.uniform(-2.0, 3.0);
            w = t.step(w, c);
            for (const auto& v : w.vehicles) {
                const auto o = t.observe(w, v.id);
                for (double x : o) REQUIRE(std::isfinite(x));
                REQUIRE(o[2] >= 0.0);
                REQUIRE(o[2] < 1.0);
                REQUIRE(o[4] >= 0.0);
                REQUIRE(o[4] < 1.0);
                for (int k : {1, 3, 5}) {
                    REQUIRE(o[k] >= 0.0);
                    REQUIRE(o[k] <= 1.0);
                }
            }
        }
    }

    TEST_CASE("reward cases") {
        Traffic t;
        auto still = world_of({{10.0, 0.0}, {100.0, 0.0}});
        CHECK(t.reward(still, still) == 0.0);
        auto fast = world_of({{10.0, 8.0}, {100.0, 8.0}});
        CHECK(t.reward(still, fast) == doctest::Approx(1.0));
        auto crash = world_of({{10.0, 2.0}, {100.0, 6.0}});
        crash.crashed = true;
        CHECK(t.reward(still, crash) == doctest::Approx(-9.5));
    }
}

TEST_SUITE("reset_epoch") {
    TEST_CASE("seven learners and seven baseline drivers") {
        Traffic t;
        const auto w = t.reset_epoch(11);
        REQUIRE(w.vehicles.size() == 14);
        int learners = 0;
        std::vector<int> agents;
        for (const auto& v : w.vehicles) {
            CHECK(v.speed == 0.0);
            if (v.controller.is_learner()) {
                ++learners;
                agents.push_back(v.controller.agent);
                CHECK(v.id % 2 == 1);
            }
        }
        CHECK(learners == 7);
        CHECK(agents == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
        CHECK_FALSE(w.crashed);
        CHECK(w.step_index == 0);
    }

    TEST_CASE("same seed gives the same world") {
        Traffic t;
        CHECK(t.reset_epoch(5) == t.reset_epoch(5));
        CHECK_FALSE(t.reset_epoch(5) == t.reset_epoch(6));
    }

    TEST_CASE("zero perturbation gives exact even spacing") {
        Traffic t(no_jitter());
        const auto w = t.reset_epoch(5);
        const double L = t.geometry().total_length;
        for (std::size_t i = 0; i + 1 < w.vehicles.size(); ++i)
            CHECK(w.vehicles[i + 1].arc_pos - w.vehicles[i].arc_pos == doctest::Approx(L / 14));
    }

    TEST_CASE("nobody starts inside the crossing") {
        Traffic t;
        for (std::uint64_t s = 0; s < 50; ++s) {
            const auto w = t.reset_epoch(s);
            for (const auto& v : w.vehicles) {
                CHECK_FALSE(t.occupies(v, 0));
                CHECK_FALSE(t.occupies(v, 1));
            }
        }
    }

    TEST_CASE("property: all-baseline epoch is crash free and lasts 1500 steps") {
        TrafficParams p;
        p.learner_count = 0;
        Traffic t(p);
        for (std::uint64_t s = 1; s <= 5; ++s) {
            auto w = t.reset_epoch(mix_seed(s, 0));
            Controls c;
            while (!w.crashed && w.step_index < p.max_steps) {
                const auto gated = t.intersection_gate(w);
                c.assign(14, std::nullopt);
                t.baseline_controls(w, gated, c);
                w = t.step(w, c, gated);
            }
            CHECK_FALSE(w.crashed);
            CHECK(w.step_index == 1500);
            CHECK(t.mean_speed(w) > 0.0);
        }
    }
}
