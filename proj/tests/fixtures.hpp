#pragma once

#include "fedtraffic/harness.hpp"

#include <functional>
#include <map>

namespace fedtraffic::test {

// Report whose mean speed is speed(seed, epoch); no crashes, full epochs.
inline RunReport synthetic_report(Mode mode, std::vector<std::uint64_t> seeds, int epochs,
                                  const std::function<double(std::uint64_t, int)>& speed) {
    RunReport r;
    r.mode = mode;
    r.fingerprint = "0000000000000000";
    r.training_epochs = epochs;
    for (auto s : seeds) {
        SeedSeries ss;
        ss.seed = s;
        for (int e = 0; e < epochs; ++e)
            ss.epochs.push_back({e, speed(s, e), false, 1500, 0.0});
        ss.window = final_window(ss.epochs, r.window_fraction);
        r.series.push_back(std::move(ss));
    }
    std::vector<EpochMetrics> all;
    for (const auto& ss : r.series) {
        const auto n = window_length(ss.epochs.size(), r.window_fraction);
        all.insert(all.end(), ss.epochs.end() - static_cast<std::ptrdiff_t>(n), ss.epochs.end());
    }
    r.pooled = final_window(all, 1.0);
    return r;
}

// Constant per-mode speeds over seeds 1..5.
inline std::vector<RunReport> constant_reports(const std::map<Mode, double>& speeds, int epochs = 10) {
    std::vector<RunReport> out;
    for (const auto& [mode, v] : speeds)
        out.push_back(synthetic_report(mode, {1, 2, 3, 4, 5}, epochs, [v](auto, int) { return v; }));
    return out;
}

// A sweep in which every claim holds.
inline std::vector<RunReport> reproducing_reports() {
    return constant_reports({{Mode::Baseline, 4.5},
                             {Mode::IRL, 3.0},
                             {Mode::FIRL, 4.0},
                             {Mode::FIRL_D, 3.95},
                             {Mode::FIRL_D_OR, 3.0},
                             {Mode::FIRL_D_LM, 3.2}});
}

} // namespace fedtraffic::test
