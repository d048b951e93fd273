#include "fedtraffic/harness.hpp"

#include "fedtraffic/errors.hpp"

#include <json.hpp>
#include <omp.h>

#include <cmath>
#include <exception>
#include <fstream>

namespace fedtraffic {

std::size_t window_length(std::size_t epochs, double fraction) {
    if (epochs == 0) return 0;
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(epochs)));
    return std::clamp<std::size_t>(n, 1, epochs);
}

namespace {

WindowStats stats_of(const std::vector<double>& xs) {
    WindowStats w;
    w.count = xs.size();
    if (xs.empty()) return w;
    double sum = 0.0;
    for (double x : xs) sum += x;
    w.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - w.mean) * (x - w.mean);
        w.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return w;
}

std::vector<double> window_values(std::span<const EpochMetrics> epochs, double fraction) {
    std::vector<double> xs;
    const std::size_t n = window_length(epochs.size(), fraction);
    for (std::size_t i = epochs.size() - n; i < epochs.size(); ++i) xs.push_back(epochs[i].mean_speed);
    return xs;
}

void summarize(RunReport& r) {
    std::vector<double> pooled;
    for (auto& s : r.series) {
        auto xs = window_values(s.epochs, r.window_fraction);
        s.window = stats_of(xs);
        pooled.insert(pooled.end(), xs.begin(), xs.end());
    }
    r.pooled = stats_of(pooled);
}

using nlohmann::ordered_json;

ordered_json stats_json(const WindowStats& w) {
    return {{"mean", w.mean}, {"stddev", w.stddev}, {"count", w.count}};
}

} // namespace

WindowStats final_window(std::span<const EpochMetrics> epochs, double fraction) {
    return stats_of(window_values(epochs, fraction));
}

std::vector<std::uint64_t> RunReport::seeds() const {
    std::vector<std::uint64_t> out;
    for (const auto& s : series) out.push_back(s.seed);
    return out;
}

std::vector<RunOutput> run_scenarios(std::span<const ScenarioConfig> cfgs) {
    struct Job {
        std::size_t cfg;
        std::size_t seed;
    };
    std::vector<Job> jobs;
    std::vector<RunOutput> out(cfgs.size());
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
        validate(cfgs[c]);
        auto& r = out[c].report;
        r.mode = cfgs[c].mode;
        r.fingerprint = fingerprint(cfgs[c]);
        r.training_epochs = cfgs[c].training_epochs;
        r.window_fraction = cfgs[c].compare.window_fraction;
        r.series.resize(cfgs[c].seeds.size());
        if (cfgs[c].trace) out[c].traces.resize(cfgs[c].seeds.size());
        for (std::size_t s = 0; s < cfgs[c].seeds.size(); ++s) jobs.push_back({c, s});
    }

    std::vector<std::exception_ptr> errors(jobs.size());
    const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t j = 0; j < n; ++j) {
        const auto [c, s] = jobs[static_cast<std::size_t>(j)];
        try {
            const std::uint64_t seed = cfgs[c].seeds[s];
            FederationResult res = run_federated_epochs(cfgs[c].federation(seed));
            auto& series = out[c].report.series[s];
            series.seed = seed;
            series.epochs = std::move(res.epochs);
            if (cfgs[c].trace) out[c].traces[s] = std::move(res.trace);
        } catch (...) {
            errors[static_cast<std::size_t>(j)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (auto& o : out) summarize(o.report);
    return out;
}

RunOutput run_scenario(const ScenarioConfig& cfg) {
    return std::move(run_scenarios(std::span(&cfg, 1)).front());
}

void write_report(std::ostream& os, const RunReport& r) {
    ordered_json j;
    j["mode"] = std::string(to_string(r.mode));
    j["fingerprint"] = r.fingerprint;
    j["training_epochs"] = r.training_epochs;
    j["window_fraction"] = r.window_fraction;
    j["seeds"] = r.seeds();
    ordered_json per_seed = ordered_json::array();
    for (const auto& s : r.series) {
        auto w = stats_json(s.window);
        w["seed"] = s.seed;
        per_seed.push_back(std::move(w));
    }
    j["summary"] = {{"pooled", stats_json(r.pooled)}, {"per_seed", std::move(per_seed)}};
    ordered_json series = ordered_json::array();
    for (const auto& s : r.series) {
        ordered_json epochs = ordered_json::array();
        for (const auto& m : s.epochs)
            epochs.push_back({{"epoch", m.epoch_index},
                              {"mean_speed", m.mean_speed},
                              {"crashed", m.crashed},
                              {"steps", m.steps},
                              {"cumulative_reward", m.cumulative_reward}});
        series.push_back({{"seed", s.seed}, {"epochs", std::move(epochs)}});
    }
    j["series"] = std::move(series);
    os << j.dump(1) << '\n';
}

RunReport read_report(std::istream& is) {
    RunReport r;
    try {
        const auto j = nlohmann::json::parse(is);
        const auto mode_name = j.at("mode").get<std::string>();
        const auto mode = parse_mode(mode_name);
        if (!mode) throw IoError("report has unknown mode '" + mode_name + "'");
        r.mode = *mode;
        r.fingerprint = j.at("fingerprint").get<std::string>();
        r.training_epochs = j.at("training_epochs").get<int>();
        r.window_fraction = j.at("window_fraction").get<double>();
        for (const auto& s : j.at("series")) {
            SeedSeries series;
            series.seed = s.at("seed").get<std::uint64_t>();
            for (const auto& e : s.at("epochs")) {
                EpochMetrics m;
                m.epoch_index = e.at("epoch").get<int>();
                m.mean_speed = e.at("mean_speed").get<double>();
                m.crashed = e.at("crashed").get<bool>();
                m.steps = e.at("steps").get<int>();
                m.cumulative_reward = e.at("cumulative_reward").get<double>();
                series.epochs.push_back(m);
            }
            r.series.push_back(std::move(series));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed report: ") + e.what());
    }
    summarize(r);
    return r;
}

void save_report(const RunReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write report: " + path.string());
    write_report(out, report);
    if (!out) throw IoError("write failed: " + path.string());
}

RunReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("report not found: " + path.string());
    try {
        return read_report(in);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

} // namespace fedtraffic
