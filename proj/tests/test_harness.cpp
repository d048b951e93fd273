#include "fedtraffic/errors.hpp"
#include "fedtraffic/harness.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fedtraffic;
using fedtraffic::test::constant_reports;
using fedtraffic::test::reproducing_reports;
using fedtraffic::test::synthetic_report;

namespace {

std::vector<std::string> error_keys(std::string_view text) {
    try {
        parse_config(text);
    } catch (const ValidationError& e) {
        return e.keys;
    }
    return {};
}

const ClaimResult& claim(const ComparisonTable& t, std::string_view name) {
    for (const auto& c : t.claims)
        if (c.name == name) return c;
    throw std::runtime_error("no claim " + std::string(name));
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("fedtraffic_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_SUITE("config") {
    TEST_CASE("empty text gives the defaults") {
        const auto cfg = parse_config("");
        CHECK(cfg.mode == Mode::FIRL);
        CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
        CHECK(cfg.training_epochs == 300);
        CHECK(canonical_form(cfg) == canonical_form(ScenarioConfig{}));
    }

    TEST_CASE("shipped default file matches the built-in defaults") {
        const auto cfg = load_config(std::filesystem::path(FEDTRAFFIC_SOURCE_DIR) / "configs" / "default.toml");
        CHECK(canonical_form(cfg) == canonical_form(ScenarioConfig{}));
        CHECK(cfg.output_dir == "out");
        CHECK_FALSE(cfg.trace);
    }

    TEST_CASE("values are read from sections") {
        const auto cfg = parse_config(R"(
# comment
[scenario]
mode = "FIRL-D-LM"   # trailing comment
seeds = [3, 9]
training_epochs = 12
trace = true
output_dir = "runs/a b"

[traffic]
v_max = 7.5
max_steps = 900

[learner]
hidden_sizes = []
action_set = [-1, 0, 1]

[fednet]
merge_count = 4
server_learning_rate = 0.01
)");
        CHECK(cfg.mode == Mode::FIRL_D_LM);
        CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 9});
        CHECK(cfg.training_epochs == 12);
        CHECK(cfg.trace);
        CHECK(cfg.output_dir == "runs/a b");
        CHECK(cfg.traffic.v_max == 7.5);
        CHECK(cfg.traffic.max_steps == 900);
        CHECK(cfg.learner.hidden_sizes.empty());
        CHECK(cfg.learner.action_set == std::vector<double>{-1, 0, 1});
        CHECK(cfg.channel.merge_count == 4);
        CHECK(cfg.server_learning_rate == 0.01);
        const auto f = cfg.federation(9);
        CHECK(f.seed == 9);
        CHECK(f.epochs == 12);
        CHECK(f.mode == Mode::FIRL_D_LM);
        CHECK(f.server_learning_rate == 0.01);
    }

    TEST_CASE("unknown, duplicate and mistyped keys are all reported") {
        const auto keys = error_keys(R"(
[traffic]
v_maxx = 3.0
dt = "fast"
dt = 0.1
[scenario]
mode = "FIRL-Z"
)");
        CHECK(keys == std::vector<std::string>{"traffic.v_maxx", "traffic.dt", "traffic.dt", "scenario.mode"});
        CHECK(error_keys("[scenario]\ntraining_epochs = 2.5\n") == std::vector<std::string>{"scenario.training_epochs"});
        CHECK(error_keys("[learner]\nhidden_sizes = [4, -1]\n") == std::vector<std::string>{"learner.hidden_sizes"});
    }

    TEST_CASE("out of range values fail validation with their keys") {
        const auto keys = error_keys("[traffic]\ndt = -0.1\n[learner]\ngamma = 1.5\n[scenario]\nseeds = []\n");
        CHECK(std::find(keys.begin(), keys.end(), "traffic.dt") != keys.end());
        CHECK(std::find(keys.begin(), keys.end(), "learner.gamma") != keys.end());
        CHECK(std::find(keys.begin(), keys.end(), "scenario.seeds") != keys.end());
        CHECK_FALSE(error_keys("[traffic]\nmax_steps = 5000\n").empty());
    }

    TEST_CASE("syntax errors") {
        CHECK_THROWS_AS(parse_config("[scenario\n"), ValidationError);
        CHECK_THROWS_AS(parse_config("mode\n"), ValidationError);
        CHECK_THROWS_AS(parse_config("[scenario]\nmode = \"FIRL\n"), ValidationError);
        CHECK_THROWS_AS(parse_config("[scenario]\nseeds = [1, 2\n"), ValidationError);
        CHECK_THROWS_AS(parse_config("[scenario]\ntraining_epochs = 3 4\n"), ValidationError);
    }

    TEST_CASE("missing file") {
        CHECK_THROWS_AS(load_config("/nonexistent/fedtraffic.toml"), IoError);
    }

    TEST_CASE("fingerprint tracks values, not layout") {
        const auto a = parse_config("[traffic]\nv_max = 8.0\n[learner]\ngamma = 0.99\n");
        const auto b = parse_config("[learner]\ngamma = 0.99\n\n[traffic]\n  v_max = 8  # same\n");
        CHECK(fingerprint(a) == fingerprint(b));
        CHECK(fingerprint(a) == fingerprint(ScenarioConfig{}));
        CHECK(fingerprint(a).size() == 16);
        const auto c = parse_config("[learner]\ngamma = 0.98\n");
        CHECK(fingerprint(c) != fingerprint(a));
        const auto d = parse_config("[scenario]\noutput_dir = \"elsewhere\"\ntrace = true\n");
        CHECK(fingerprint(d) == fingerprint(a));
    }
}

TEST_SUITE("statistics") {
    TEST_CASE("final window") {
        std::vector<EpochMetrics> e;
        for (int i = 0; i < 10; ++i) e.push_back({i, static_cast<double>(i), false, 1500, 0});
        const auto w = final_window(e, 0.2);
        CHECK(w.count == 2);
        CHECK(w.mean == 8.5);
        CHECK(w.stddev == doctest::Approx(std::sqrt(0.5)));
        CHECK(final_window(std::span(e).first(1), 0.2).count == 1);
        CHECK(final_window(std::span(e).first(1), 0.2).stddev == 0.0);
        CHECK(window_length(300, 0.2) == 60);
        CHECK(window_length(3, 0.01) == 1);
        CHECK(window_length(3, 1.0) == 3);
    }

    TEST_CASE("sign test") {
        CHECK(sign_test_p(5, 5) == doctest::Approx(1.0 / 32));
        CHECK(sign_test_p(4, 5) == doctest::Approx(6.0 / 32));
        CHECK(sign_test_p(0, 5) == doctest::Approx(1.0));
        CHECK(sign_test_p(8, 10) == doctest::Approx(56.0 / 1024));
        CHECK(sign_test_p(0, 0) == 1.0);
    }
}

TEST_SUITE("compare") {
    TEST_CASE("identical runs") {
        const auto reports = constant_reports({{Mode::Baseline, 4.0},
                                               {Mode::IRL, 4.0},
                                               {Mode::FIRL, 4.0},
                                               {Mode::FIRL_D, 4.0},
                                               {Mode::FIRL_D_OR, 4.0},
                                               {Mode::FIRL_D_LM, 4.0}});
        const auto t = compare(reports);
        CHECK(t.pairs.size() == 15);
        for (const auto& p : t.pairs) {
            CHECK(p.difference == 0.0);
            CHECK(p.wins == 0);
            CHECK(p.ties == 5);
        }
        CHECK_FALSE(claim(t, "firl-beats-irl").reproduced);
        CHECK_FALSE(claim(t, "impairments-degrade").reproduced);
        CHECK(claim(t, "delay-trivial").reproduced);
        CHECK(claim(t, "firl-approaches-baseline").reproduced);
        CHECK_FALSE(t.all_reproduced());
    }

    TEST_CASE("clear separation") {
        const auto t = compare(constant_reports({{Mode::FIRL, 4.0}, {Mode::IRL, 3.0}}));
        REQUIRE(t.pairs.size() == 1);
        CHECK(t.pairs[0].a == Mode::IRL);
        CHECK(t.pairs[0].difference == doctest::Approx(-1.0));
        CHECK(t.pairs[0].wins == 0);
        CHECK(t.pairs[0].sign_p == doctest::Approx(1.0));
        CHECK(claim(t, "firl-beats-irl").reproduced);
        CHECK_FALSE(claim(t, "firl-approaches-baseline").reproduced);
        CHECK(claim(t, "firl-approaches-baseline").detail == "no report for Baseline");
    }

    TEST_CASE("small delay gap is trivial, a large one is not") {
        CHECK(claim(compare(constant_reports({{Mode::FIRL, 4.0}, {Mode::FIRL_D, 3.9}})), "delay-trivial").reproduced);
        CHECK_FALSE(
            claim(compare(constant_reports({{Mode::FIRL, 4.0}, {Mode::FIRL_D, 3.5}})), "delay-trivial").reproduced);
    }

    TEST_CASE("ordering must hold on four of five seeds") {
        auto irl = synthetic_report(Mode::IRL, {1, 2, 3, 4, 5}, 10, [](auto, int) { return 3.0; });
        auto firl3 = synthetic_report(Mode::FIRL, {1, 2, 3, 4, 5}, 10,
                                      [](std::uint64_t s, int) { return s <= 3 ? 4.0 : 2.0; });
        std::vector<RunReport> a{irl, firl3};
        CHECK_FALSE(claim(compare(a), "firl-beats-irl").reproduced);
        auto firl4 = synthetic_report(Mode::FIRL, {1, 2, 3, 4, 5}, 10,
                                      [](std::uint64_t s, int) { return s <= 4 ? 4.0 : 2.0; });
        std::vector<RunReport> b{irl, firl4};
        CHECK(claim(compare(b), "firl-beats-irl").reproduced);
    }

    TEST_CASE("only the final window counts") {
        auto irl = synthetic_report(Mode::IRL, {1, 2, 3, 4, 5}, 10, [](auto, int e) { return e < 8 ? 9.0 : 1.0; });
        auto firl = synthetic_report(Mode::FIRL, {1, 2, 3, 4, 5}, 10, [](auto, int) { return 2.0; });
        std::vector<RunReport> r{irl, firl};
        CHECK(claim(compare(r), "firl-beats-irl").reproduced);
    }

    TEST_CASE("all claims reproduce on a well separated sweep") {
        const auto t = compare(reproducing_reports());
        CHECK(t.all_reproduced());
        std::ostringstream os;
        write_comparison(os, t);
        CHECK(os.str().find("NOT-REPRODUCED") == std::string::npos);
        CHECK(os.str().find("REPRODUCED") != std::string::npos);
    }

    TEST_CASE("incomparable inputs") {
        auto a = synthetic_report(Mode::FIRL, {1, 2, 3}, 10, [](auto, int) { return 1.0; });
        auto b = synthetic_report(Mode::IRL, {1, 2, 4}, 10, [](auto, int) { return 1.0; });
        std::vector<RunReport> seeds{a, b};
        CHECK_THROWS_AS(compare(seeds), IncomparableRuns);
        auto c = synthetic_report(Mode::IRL, {1, 2, 3}, 12, [](auto, int) { return 1.0; });
        std::vector<RunReport> epochs{a, c};
        CHECK_THROWS_AS(compare(epochs), IncomparableRuns);
        std::vector<RunReport> one{a};
        CHECK_THROWS_AS(compare(one), IncomparableRuns);
    }
}

TEST_SUITE("export") {
    TEST_CASE("csv layout") {
        const auto r = synthetic_report(Mode::FIRL_D, {4}, 2, [](auto, int e) { return 1.5 + e; });
        std::ostringstream os;
        write_csv(os, r);
        CHECK(os.str() ==
              "mode,seed,epoch,mean_speed,crashed,steps,cumulative_reward\n"
              "FIRL-D,4,0,1.5,0,1500,0\n"
              "FIRL-D,4,1,2.5,0,1500,0\n");
        std::ostringstream body;
        write_csv(body, r, false);
        CHECK(body.str().find("mode,") == std::string::npos);
    }

    TEST_CASE("csv values round trip exactly") {
        auto r = synthetic_report(Mode::IRL, {1}, 1, [](auto, int) { return 0.1 + 0.2; });
        r.series[0].epochs[0].cumulative_reward = -9.5;
        r.series[0].epochs[0].crashed = true;
        std::ostringstream os;
        write_csv(os, r, false);
        CHECK(os.str() == "IRL,1,0,0.30000000000000004,1,1500,-9.5\n");
    }

    TEST_CASE("report json round trip") {
        auto r = synthetic_report(Mode::FIRL_D_OR, {2, 7}, 5, [](std::uint64_t s, int e) { return s * 0.1 + e / 3.0; });
        r.series[1].epochs[4].crashed = true;
        r.series[1].epochs[4].steps = 77;
        std::stringstream ss;
        write_report(ss, r);
        const auto back = read_report(ss);
        CHECK(back.mode == r.mode);
        CHECK(back.fingerprint == r.fingerprint);
        CHECK(back.training_epochs == 5);
        REQUIRE(back.series.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(back.series[i].seed == r.series[i].seed);
            CHECK(back.series[i].epochs == r.series[i].epochs);
        }
        CHECK(back.pooled.mean == r.pooled.mean);
        std::istringstream junk("{\"mode\": \"FIRL\"}");
        CHECK_THROWS(read_report(junk));
        CHECK_THROWS_AS(load_report("/nonexistent/report.json"), IoError);
    }

    TEST_CASE("files are reproducible") {
        const auto dir = scratch_dir("export");
        const auto reports = reproducing_reports();
        export_csv(reports[0], dir / "a" / "m.csv");
        export_csv(reports[0], dir / "b" / "m.csv");
        export_plot(reports, dir / "a" / "p.svg");
        export_plot(reports, dir / "b" / "p.svg");
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream in(p, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        CHECK(slurp(dir / "a" / "m.csv") == slurp(dir / "b" / "m.csv"));
        CHECK(slurp(dir / "a" / "p.svg") == slurp(dir / "b" / "p.svg"));
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("plot has one curve per mode") {
        const auto reports = reproducing_reports();
        std::ostringstream os;
        write_plot(os, reports);
        const std::string svg = os.str();
        auto count = [&](const std::string& needle) {
            std::size_t n = 0;
            for (auto p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) ++n;
            return n;
        };
        CHECK(svg.rfind("<svg", 0) == 0);
        CHECK(count("class=\"curve\"") == 6);
        for (Mode m : kAllModes) CHECK(count("data-mode=\"" + std::string(to_string(m)) + "\"") == 1);
        CHECK(count("mean speed") == 1);
    }

    TEST_CASE("single epoch series still plot") {
        const auto r = synthetic_report(Mode::FIRL, {1}, 1, [](auto, int) { return 3.0; });
        std::ostringstream os;
        write_plot(os, std::span(&r, 1));
        CHECK(os.str().find("class=\"curve\"") != std::string::npos);
        CHECK(os.str().find("nan") == std::string::npos);
    }
}

TEST_SUITE("scenario") {
    TEST_CASE("parallel jobs match direct runs") {
        ScenarioConfig a;
        a.mode = Mode::FIRL_D;
        a.seeds = {3, 1};
        a.training_epochs = 2;
        a.trace = true;
        ScenarioConfig b = a;
        b.mode = Mode::Baseline;
        b.trace = false;
        const std::vector<ScenarioConfig> cfgs{a, b};
        const auto out = run_scenarios(cfgs);
        REQUIRE(out.size() == 2);
        CHECK(out[0].report.mode == Mode::FIRL_D);
        CHECK(out[0].report.fingerprint == fingerprint(a));
        CHECK(out[0].report.seeds() == std::vector<std::uint64_t>{3, 1});
        REQUIRE(out[0].traces.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            auto direct = run_federated_epochs(a.federation(a.seeds[i]));
            CHECK(out[0].report.series[i].epochs == direct.epochs);
            CHECK(out[0].traces[i].size() == direct.trace.size());
        }
        for (const auto& s : out[1].report.series) CHECK(s.window.stddev == 0.0);
        const auto single = run_scenario(b);
        CHECK(single.report.series[0].epochs == out[1].report.series[0].epochs);
        CHECK(single.traces.empty());
    }
}
