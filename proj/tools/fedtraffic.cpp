#include "fedtraffic/errors.hpp"
#include "fedtraffic/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace fedtraffic;

namespace {

struct Options {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::string out;
    int epochs = 0;
    bool check = false;
    bool trace = false;
    std::string mode;
    std::vector<std::string> reports;
};

ScenarioConfig make_config(const Options& o) {
    ScenarioConfig cfg = o.config.empty() ? ScenarioConfig{} : load_config(o.config);
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (o.epochs > 0) cfg.training_epochs = o.epochs;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.trace) cfg.trace = true;
    if (!o.mode.empty()) {
        auto m = parse_mode(o.mode);
        if (!m) throw ValidationError("unknown mode '" + o.mode + "'", {"scenario.mode"});
        cfg.mode = *m;
    }
    validate(cfg);
    return cfg;
}

std::string stem(Mode m) { return std::string(to_string(m)); }

void write_outputs(const ScenarioConfig& cfg, const RunOutput& run) {
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    const std::string name = stem(run.report.mode);
    save_report(run.report, dir / (name + ".report.json"));
    export_csv(run.report, dir / (name + ".csv"));
    for (std::size_t i = 0; i < run.traces.size(); ++i)
        export_trace(run.traces[i], dir / (name + ".seed" + std::to_string(run.report.series[i].seed) + ".trace.jsonl"));
}

void print_summary(const RunReport& r) {
    std::printf("%-10s pooled final-window mean speed %.4f (sd %.4f)", stem(r.mode).c_str(), r.pooled.mean,
                r.pooled.stddev);
    int crashes = 0;
    for (const auto& s : r.series)
        for (const auto& m : s.epochs) crashes += m.crashed;
    std::printf(", crashed epochs %d\n", crashes);
}

std::vector<RunReport> collect_reports(const Options& o) {
    std::vector<RunReport> reports;
    if (!o.reports.empty()) {
        for (const auto& p : o.reports) reports.push_back(load_report(p));
        return reports;
    }
    const fs::path dir = o.out.empty() ? fs::path("out") : fs::path(o.out);
    for (Mode m : kAllModes) {
        const fs::path p = dir / (stem(m) + ".report.json");
        if (fs::exists(p)) reports.push_back(load_report(p));
    }
    if (reports.empty()) throw IoError("no reports found in " + dir.string());
    return reports;
}

int report_claims(const ComparisonTable& table, bool check, const fs::path* save) {
    write_comparison(std::cout, table);
    if (save) {
        std::ofstream out(*save, std::ios::binary);
        if (!out) throw IoError("cannot write " + save->string());
        write_comparison(out, table);
    }
    if (check && !table.all_reproduced()) {
        std::cerr << "check failed: at least one claim NOT-REPRODUCED\n";
        return 2;
    }
    return 0;
}

int cmd_run(const Options& o) {
    const ScenarioConfig cfg = make_config(o);
    const RunOutput run = run_scenario(cfg);
    write_outputs(cfg, run);
    print_summary(run.report);
    return 0;
}

int cmd_sweep(const Options& o) {
    const ScenarioConfig base = make_config(o);
    std::vector<ScenarioConfig> cfgs;
    for (Mode m : kAllModes) {
        ScenarioConfig c = base;
        c.mode = m;
        cfgs.push_back(std::move(c));
    }
    const auto runs = run_scenarios(cfgs);
    std::vector<RunReport> reports;
    const fs::path dir = base.output_dir;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        write_outputs(cfgs[i], runs[i]);
        print_summary(runs[i].report);
        reports.push_back(runs[i].report);
    }
    {
        std::ofstream csv(dir / "metrics.csv", std::ios::binary);
        if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
        for (std::size_t i = 0; i < reports.size(); ++i) write_csv(csv, reports[i], i == 0);
    }
    export_plot(reports, dir / "mean_speed.svg");
    std::cout << '\n';
    const fs::path table = dir / "comparison.txt";
    return report_claims(compare(reports, base.compare), o.check, &table);
}

int cmd_compare(const Options& o) {
    const ScenarioConfig cfg = make_config(o);
    const auto reports = collect_reports(o);
    return report_claims(compare(reports, cfg.compare), o.check, nullptr);
}

int cmd_plot(const Options& o) {
    const auto reports = collect_reports(o);
    const fs::path dir = o.out.empty() ? fs::path("out") : fs::path(o.out);
    fs::create_directories(dir);
    export_plot(reports, dir / "mean_speed.svg");
    std::cout << (dir / "mean_speed.svg").string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated traffic-control learning simulator"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "TOML config file");
    app.add_option("--seed", o.seeds, "Seed list, e.g. 1,2,3")->delimiter(',');
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--epochs", o.epochs, "Training epochs per seed")->check(CLI::PositiveNumber);
    app.add_flag("--check", o.check, "Exit 2 when a claim is NOT-REPRODUCED");
    app.add_flag("--trace", o.trace, "Write per-seed event traces");
    app.add_option("--mode", o.mode, "Mode for `run`: Baseline, IRL, FIRL, FIRL-D, FIRL-D-OR, FIRL-D-LM");

    auto* run = app.add_subcommand("run", "Run one scenario");
    auto* sweep = app.add_subcommand("sweep", "Run all six modes on shared seeds and compare");
    auto* cmp = app.add_subcommand("compare", "Compare saved reports");
    cmp->add_option("reports", o.reports, "Report files (default: every <out>/<mode>.report.json)");
    auto* plot = app.add_subcommand("plot", "Plot saved reports");
    plot->add_option("reports", o.reports, "Report files (default: every <out>/<mode>.report.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*run) return cmd_run(o);
        if (*sweep) return cmd_sweep(o);
        if (*cmp) return cmd_compare(o);
        if (*plot) return cmd_plot(o);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
