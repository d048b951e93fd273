#pragma once

#include "fedtraffic/federation.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedtraffic {

struct CompareThresholds {
    double window_fraction = 0.2;   // trailing share of epochs summarized
    double approach_fraction = 0.8; // FIRL >= this * Baseline
    double trivial_fraction = 0.05; // |FIRL-D - FIRL| <= this * FIRL
    double degrade_fraction = 0.95; // impaired mode < this * FIRL
    double seed_fraction = 0.8;     // share of seeds a per-seed ordering must hold on
};

struct ScenarioConfig {
    Mode mode = Mode::FIRL;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    int training_epochs = 300;
    TrafficParams traffic{};
    LearnerConfig learner{};
    ChannelModel channel{};
    std::optional<double> server_learning_rate;
    CompareThresholds compare{};
    bool trace = false;
    std::string output_dir = "out";

    FederationConfig federation(std::uint64_t seed) const;
};

// Throws ValidationError naming every offending key as "section.key".
void validate(const ScenarioConfig& cfg);

// TOML subset: [section] headers, key = value with integers, floats, booleans,
// double-quoted strings and flat arrays of those; '#' comments.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);

// Sorted "section.key = value" lines for every setting except output_dir.
std::string canonical_form(const ScenarioConfig& cfg);
// FNV-1a 64 of canonical_form, as 16 hex digits.
std::string fingerprint(const ScenarioConfig& cfg);

struct WindowStats {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation, 0 for a single value
    std::size_t count = 0;
};

// Stats of mean_speed over the trailing `fraction` of epochs (at least one).
WindowStats final_window(std::span<const EpochMetrics> epochs, double fraction);
std::size_t window_length(std::size_t epochs, double fraction);

struct SeedSeries {
    std::uint64_t seed = 0;
    std::vector<EpochMetrics> epochs;
    WindowStats window{};
};

struct RunReport {
    Mode mode = Mode::FIRL;
    std::string fingerprint;
    int training_epochs = 0;
    double window_fraction = 0.2;
    std::vector<SeedSeries> series;
    WindowStats pooled{};

    std::vector<std::uint64_t> seeds() const;
};

struct RunOutput {
    RunReport report;
    std::vector<std::vector<TraceEvent>> traces; // per seed, empty unless cfg.trace
};

RunOutput run_scenario(const ScenarioConfig& cfg);

// Runs every (config, seed) pair as an independent job, in parallel when
// OpenMP threads are available. Results do not depend on the thread count.
std::vector<RunOutput> run_scenarios(std::span<const ScenarioConfig> cfgs);

void write_report(std::ostream& os, const RunReport& report);
RunReport read_report(std::istream& is);
void save_report(const RunReport& report, const std::filesystem::path& path);
RunReport load_report(const std::filesystem::path& path);

struct ModeSummary {
    Mode mode = Mode::FIRL;
    double pooled_mean = 0.0;
    std::vector<double> seed_means; // in seed order
};

struct PairwiseDiff {
    Mode a = Mode::FIRL;
    Mode b = Mode::IRL;
    double difference = 0.0; // pooled a - pooled b
    int wins = 0;            // seeds with a > b
    int ties = 0;
    double sign_p = 1.0;     // one-sided, H1: a > b
};

struct ClaimResult {
    std::string name;
    std::string statement;
    bool reproduced = false;
    std::string detail;
};

struct ComparisonTable {
    std::vector<std::uint64_t> seeds;
    std::vector<ModeSummary> modes;
    std::vector<PairwiseDiff> pairs;
    std::vector<ClaimResult> claims;

    bool all_reproduced() const;
};

// One-sided sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
double sign_test_p(int wins, int trials);

// Throws IncomparableRuns when fewer than two reports are given or their seed
// sets or epoch counts differ.
ComparisonTable compare(std::span<const RunReport> reports, const CompareThresholds& th = {});
void write_comparison(std::ostream& os, const ComparisonTable& table);

// mode,seed,epoch,mean_speed,crashed,steps,cumulative_reward
void write_csv(std::ostream& os, const RunReport& report, bool header = true);
void export_csv(const RunReport& report, const std::filesystem::path& path);

// One curve per report (pooled mean over seeds) with a min-max band.
void write_plot(std::ostream& os, std::span<const RunReport> reports);
void export_plot(std::span<const RunReport> reports, const std::filesystem::path& path);

void export_trace(const std::vector<TraceEvent>& trace, const std::filesystem::path& path);

} // namespace fedtraffic
