#include "fedtraffic/harness.hpp"

#include "fedtraffic/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace fedtraffic {

namespace {

std::string shortest(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

std::string fixed2(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, 2);
    return std::string(buf, p);
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

constexpr std::array<const char*, 6> kPalette{"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#a6761d"};

const char* color_for(Mode m) {
    for (std::size_t i = 0; i < kAllModes.size(); ++i)
        if (kAllModes[i] == m) return kPalette[i];
    return "#000000";
}

// Round up to 1, 2 or 5 times a power of ten.
double nice_ceiling(double x) {
    if (!(x > 0)) return 1.0;
    const double p = std::pow(10.0, std::floor(std::log10(x)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * p >= x) return m * p;
    return 10.0 * p;
}

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

void write_csv(std::ostream& os, const RunReport& r, bool header) {
    if (header) os << "mode,seed,epoch,mean_speed,crashed,steps,cumulative_reward\n";
    const std::string mode(to_string(r.mode));
    for (const auto& s : r.series)
        for (const auto& m : s.epochs)
            os << mode << ',' << s.seed << ',' << m.epoch_index << ',' << shortest(m.mean_speed) << ','
               << (m.crashed ? 1 : 0) << ',' << m.steps << ',' << shortest(m.cumulative_reward) << '\n';
}

void export_csv(const RunReport& report, const std::filesystem::path& path) {
    auto out = open_out(path);
    write_csv(out, report);
    finish(out, path);
}

void write_plot(std::ostream& os, std::span<const RunReport> reports) {
    constexpr double W = 800, H = 480, left = 70, right = 170, top = 30, bottom = 60;
    const double pw = W - left - right, ph = H - top - bottom;

    std::size_t epochs = 1;
    double ymax = 0.0;
    for (const auto& r : reports)
        for (const auto& s : r.series) {
            epochs = std::max(epochs, s.epochs.size());
            for (const auto& m : s.epochs) ymax = std::max(ymax, m.mean_speed);
        }
    ymax = nice_ceiling(ymax);
    const double xspan = epochs > 1 ? static_cast<double>(epochs - 1) : 1.0;
    auto X = [&](double e) { return left + pw * e / xspan; };
    auto Y = [&](double v) { return top + ph * (1.0 - v / ymax); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
       << W << ' ' << H << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"#ffffff\"/>\n";
    os << "<g class=\"axes\" stroke=\"#000000\" stroke-width=\"1\">\n";
    os << "<line x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(top + ph) << "\" x2=\"" << fixed2(left + pw)
       << "\" y2=\"" << fixed2(top + ph) << "\"/>\n";
    os << "<line x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(top) << "\" x2=\"" << fixed2(left) << "\" y2=\""
       << fixed2(top + ph) << "\"/>\n";
    os << "</g>\n<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i <= 5; ++i) {
        const double e = xspan * i / 5.0;
        const double v = ymax * i / 5.0;
        os << "<line x1=\"" << fixed2(X(e)) << "\" y1=\"" << fixed2(top + ph) << "\" x2=\"" << fixed2(X(e))
           << "\" y2=\"" << fixed2(top + ph + 5) << "\" stroke=\"#000000\"/>\n";
        os << "<text x=\"" << fixed2(X(e)) << "\" y=\"" << fixed2(top + ph + 18) << "\" text-anchor=\"middle\">"
           << shortest(std::round(e)) << "</text>\n";
        os << "<line x1=\"" << fixed2(left - 5) << "\" y1=\"" << fixed2(Y(v)) << "\" x2=\"" << fixed2(left)
           << "\" y2=\"" << fixed2(Y(v)) << "\" stroke=\"#000000\"/>\n";
        os << "<text x=\"" << fixed2(left - 8) << "\" y=\"" << fixed2(Y(v) + 4) << "\" text-anchor=\"end\">"
           << fixed2(v) << "</text>\n";
    }
    os << "</g>\n";
    os << "<text class=\"xlabel\" x=\"" << fixed2(left + pw / 2) << "\" y=\"" << fixed2(H - 18)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">epoch</text>\n";
    os << "<text class=\"ylabel\" x=\"18\" y=\"" << fixed2(top + ph / 2) << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 " << fixed2(top + ph / 2)
       << ")\">mean speed (m/s)</text>\n";

    std::size_t row = 0;
    for (const auto& r : reports) {
        const char* color = color_for(r.mode);
        const std::string name = escape(to_string(r.mode));
        std::size_t n = epochs;
        for (const auto& s : r.series) n = std::min(n, s.epochs.size());
        if (r.series.empty()) n = 0;
        std::vector<double> mean(n, 0.0), lo(n, 0.0), hi(n, 0.0);
        for (std::size_t e = 0; e < n; ++e) {
            lo[e] = hi[e] = r.series.front().epochs[e].mean_speed;
            for (const auto& s : r.series) {
                const double v = s.epochs[e].mean_speed;
                mean[e] += v;
                lo[e] = std::min(lo[e], v);
                hi[e] = std::max(hi[e], v);
            }
            mean[e] /= static_cast<double>(r.series.size());
        }
        std::ostringstream band, curve;
        for (std::size_t e = 0; e < n; ++e)
            band << (e ? " L" : "M") << fixed2(X(static_cast<double>(e))) << ',' << fixed2(Y(hi[e]));
        for (std::size_t e = n; e-- > 0;)
            band << " L" << fixed2(X(static_cast<double>(e))) << ',' << fixed2(Y(lo[e]));
        if (n) band << " Z";
        for (std::size_t e = 0; e < n; ++e)
            curve << (e ? " L" : "M") << fixed2(X(static_cast<double>(e))) << ',' << fixed2(Y(mean[e]));

        os << "<g class=\"mode\" data-mode=\"" << name << "\">\n";
        os << "<path class=\"band\" d=\"" << band.str() << "\" fill=\"" << color
           << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
        os << "<path class=\"curve\" d=\"" << curve.str() << "\" fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"1.5\"/>\n";
        const double ly = top + 10 + 20.0 * static_cast<double>(row);
        os << "<line x1=\"" << fixed2(left + pw + 15) << "\" y1=\"" << fixed2(ly) << "\" x2=\""
           << fixed2(left + pw + 40) << "\" y2=\"" << fixed2(ly) << "\" stroke=\"" << color
           << "\" stroke-width=\"3\"/>\n";
        os << "<text x=\"" << fixed2(left + pw + 46) << "\" y=\"" << fixed2(ly + 4)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << name << "</text>\n";
        os << "</g>\n";
        ++row;
    }
    os << "</svg>\n";
}

void export_plot(std::span<const RunReport> reports, const std::filesystem::path& path) {
    auto out = open_out(path);
    write_plot(out, reports);
    finish(out, path);
}

void export_trace(const std::vector<TraceEvent>& trace, const std::filesystem::path& path) {
    auto out = open_out(path);
    write_trace(out, trace);
    finish(out, path);
}

} // namespace fedtraffic
