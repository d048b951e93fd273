#include "fedtraffic/harness.hpp"

#include "fedtraffic/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace fedtraffic {

double sign_test_p(int wins, int trials) {
    if (trials <= 0) return 1.0;
    wins = std::clamp(wins, 0, trials);
    double p = 0.0;
    for (int k = wins; k <= trials; ++k) {
        // log C(trials, k) - trials * log 2
        p += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                      trials * std::log(2.0));
    }
    return std::min(1.0, p);
}

bool ComparisonTable::all_reproduced() const {
    return !claims.empty() && std::all_of(claims.begin(), claims.end(),
                                          [](const ClaimResult& c) { return c.reproduced; });
}

namespace {

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

const ModeSummary* find(const ComparisonTable& t, Mode m) {
    for (const auto& s : t.modes)
        if (s.mode == m) return &s;
    return nullptr;
}

ClaimResult missing(ClaimResult c, Mode m) {
    c.reproduced = false;
    c.detail = "no report for " + std::string(to_string(m));
    return c;
}

int required_seeds(std::size_t n, double fraction) {
    return static_cast<int>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

ClaimResult degrade_claim(const ComparisonTable& t, const CompareThresholds& th) {
    ClaimResult c{"impairments-degrade",
                  "FIRL-D-OR and FIRL-D-LM each below " + fmt("%.2f", th.degrade_fraction) +
                      " x FIRL on the required share of seeds",
                  false, ""};
    const ModeSummary* firl = find(t, Mode::FIRL);
    if (!firl) return missing(c, Mode::FIRL);
    const int need = required_seeds(t.seeds.size(), th.seed_fraction);
    bool ok = true;
    for (Mode m : {Mode::FIRL_D_OR, Mode::FIRL_D_LM}) {
        const ModeSummary* s = find(t, m);
        if (!s) return missing(c, m);
        int hits = 0;
        for (std::size_t i = 0; i < t.seeds.size(); ++i)
            if (s->seed_means[i] < th.degrade_fraction * firl->seed_means[i]) ++hits;
        ok = ok && hits >= need;
        if (!c.detail.empty()) c.detail += "; ";
        c.detail += std::string(to_string(m)) + " degraded on " + std::to_string(hits) + "/" +
                    std::to_string(t.seeds.size()) + " seeds (need " + std::to_string(need) +
                    ", sign p=" + fmt("%.4f", sign_test_p(hits, static_cast<int>(t.seeds.size()))) + ")";
    }
    c.reproduced = ok;
    return c;
}

} // namespace

ComparisonTable compare(std::span<const RunReport> reports, const CompareThresholds& th) {
    if (reports.size() < 2) throw IncomparableRuns("comparison needs at least two reports");
    auto sorted_seeds = [](const RunReport& r) {
        auto s = r.seeds();
        std::sort(s.begin(), s.end());
        return s;
    };
    ComparisonTable t;
    t.seeds = sorted_seeds(reports.front());
    if (t.seeds.empty()) throw IncomparableRuns("report has no seeds");
    if (std::adjacent_find(t.seeds.begin(), t.seeds.end()) != t.seeds.end())
        throw IncomparableRuns("report lists a seed twice");
    for (const auto& r : reports) {
        if (sorted_seeds(r) != t.seeds)
            throw IncomparableRuns("reports cover different seed sets (" + std::string(to_string(r.mode)) + ")");
        if (r.training_epochs != reports.front().training_epochs)
            throw IncomparableRuns("reports differ in training_epochs (" + std::string(to_string(r.mode)) + ")");
        for (const auto& s : r.series)
            if (s.epochs.size() != static_cast<std::size_t>(r.training_epochs))
                throw IncomparableRuns("series length differs from training_epochs");
    }

    for (const auto& r : reports) {
        ModeSummary s;
        s.mode = r.mode;
        std::vector<EpochMetrics> pooled;
        for (std::uint64_t seed : t.seeds) {
            auto it = std::find_if(r.series.begin(), r.series.end(),
                                   [seed](const SeedSeries& x) { return x.seed == seed; });
            s.seed_means.push_back(final_window(it->epochs, th.window_fraction).mean);
        }
        double sum = 0.0;
        for (double m : s.seed_means) sum += m;
        s.pooled_mean = sum / static_cast<double>(s.seed_means.size());
        t.modes.push_back(std::move(s));
    }

    for (std::size_t i = 0; i < t.modes.size(); ++i) {
        for (std::size_t j = i + 1; j < t.modes.size(); ++j) {
            const auto& a = t.modes[i];
            const auto& b = t.modes[j];
            PairwiseDiff d{a.mode, b.mode, a.pooled_mean - b.pooled_mean, 0, 0, 1.0};
            for (std::size_t k = 0; k < t.seeds.size(); ++k) {
                if (a.seed_means[k] > b.seed_means[k]) ++d.wins;
                else if (a.seed_means[k] == b.seed_means[k]) ++d.ties;
            }
            d.sign_p = sign_test_p(d.wins, static_cast<int>(t.seeds.size()) - d.ties);
            t.pairs.push_back(d);
        }
    }

    const std::size_t n = t.seeds.size();
    const int need = required_seeds(n, th.seed_fraction);
    const ModeSummary* firl = find(t, Mode::FIRL);

    {
        ClaimResult c{"firl-beats-irl", "FIRL final-window mean speed exceeds IRL on the required share of seeds",
                      false, ""};
        const ModeSummary* irl = find(t, Mode::IRL);
        if (!firl) c = missing(c, Mode::FIRL);
        else if (!irl) c = missing(c, Mode::IRL);
        else {
            int wins = 0;
            for (std::size_t k = 0; k < n; ++k)
                if (firl->seed_means[k] > irl->seed_means[k]) ++wins;
            c.reproduced = wins >= need;
            c.detail = "FIRL > IRL on " + std::to_string(wins) + "/" + std::to_string(n) + " seeds (need " +
                       std::to_string(need) + ", sign p=" + fmt("%.4f", sign_test_p(wins, static_cast<int>(n))) +
                       "); pooled " + fmt("%.4f", firl->pooled_mean) + " vs " + fmt("%.4f", irl->pooled_mean);
        }
        t.claims.push_back(std::move(c));
    }
    {
        ClaimResult c{"firl-approaches-baseline",
                      "pooled FIRL >= " + fmt("%.2f", th.approach_fraction) + " x pooled Baseline", false, ""};
        const ModeSummary* base = find(t, Mode::Baseline);
        if (!firl) c = missing(c, Mode::FIRL);
        else if (!base) c = missing(c, Mode::Baseline);
        else {
            c.reproduced = firl->pooled_mean >= th.approach_fraction * base->pooled_mean;
            c.detail = "FIRL " + fmt("%.4f", firl->pooled_mean) + " vs threshold " +
                       fmt("%.4f", th.approach_fraction * base->pooled_mean) + " (Baseline " +
                       fmt("%.4f", base->pooled_mean) + ")";
        }
        t.claims.push_back(std::move(c));
    }
    {
        ClaimResult c{"delay-trivial", "|FIRL-D - FIRL| <= " + fmt("%.2f", th.trivial_fraction) + " x FIRL (pooled)",
                      false, ""};
        const ModeSummary* d = find(t, Mode::FIRL_D);
        if (!firl) c = missing(c, Mode::FIRL);
        else if (!d) c = missing(c, Mode::FIRL_D);
        else {
            const double gap = std::abs(d->pooled_mean - firl->pooled_mean);
            c.reproduced = gap <= th.trivial_fraction * firl->pooled_mean;
            c.detail = "|" + fmt("%.4f", d->pooled_mean) + " - " + fmt("%.4f", firl->pooled_mean) + "| = " +
                       fmt("%.4f", gap) + ", limit " + fmt("%.4f", th.trivial_fraction * firl->pooled_mean);
        }
        t.claims.push_back(std::move(c));
    }
    t.claims.push_back(degrade_claim(t, th));
    return t;
}

void write_comparison(std::ostream& os, const ComparisonTable& t) {
    os << "seeds:";
    for (auto s : t.seeds) os << ' ' << s;
    os << "\n\nfinal-window mean speed (m/s)\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-10s %8s", "mode", "pooled");
    os << buf;
    for (auto s : t.seeds) {
        std::snprintf(buf, sizeof buf, " %8s", ("s" + std::to_string(s)).c_str());
        os << buf;
    }
    os << '\n';
    for (const auto& m : t.modes) {
        std::snprintf(buf, sizeof buf, "%-10s %8.4f", std::string(to_string(m.mode)).c_str(), m.pooled_mean);
        os << buf;
        for (double x : m.seed_means) {
            std::snprintf(buf, sizeof buf, " %8.4f", x);
            os << buf;
        }
        os << '\n';
    }
    os << "\npairwise (a - b, seeds a > b, one-sided sign test)\n";
    for (const auto& d : t.pairs) {
        std::snprintf(buf, sizeof buf, "%-10s - %-10s %+9.4f  wins %d ties %d  p=%.4f\n",
                      std::string(to_string(d.a)).c_str(), std::string(to_string(d.b)).c_str(), d.difference,
                      d.wins, d.ties, d.sign_p);
        os << buf;
    }
    os << "\nclaims\n";
    for (const auto& c : t.claims)
        os << (c.reproduced ? "REPRODUCED     " : "NOT-REPRODUCED ") << c.name << ": " << c.statement << "\n    "
           << c.detail << '\n';
}

} // namespace fedtraffic
