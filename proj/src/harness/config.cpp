#include "fedtraffic/harness.hpp"

#include "fedtraffic/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <variant>

namespace fedtraffic {

namespace {

struct Value;
using Array = std::vector<Value>;
struct Value {
    std::variant<std::int64_t, double, bool, std::string, Array> v;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

class LineParser {
public:
    LineParser(std::string_view text, int line) : s_(text), line_(line) {}

    Value value() {
        skip_ws();
        if (done()) fail("missing value");
        char c = s_[pos_];
        if (c == '"') return {string()};
        if (c == '[') return {array()};
        if (s_.substr(pos_, 4) == "true") { pos_ += 4; return {true}; }
        if (s_.substr(pos_, 5) == "false") { pos_ += 5; return {false}; }
        return number();
    }

    void finish() {
        skip_ws();
        if (!done() && s_[pos_] != '#') fail("unexpected trailing characters");
    }

private:
    bool done() const { return pos_ >= s_.size(); }
    void skip_ws() {
        while (!done() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ValidationError("line " + std::to_string(line_) + ": " + msg, {});
    }

    std::string string() {
        ++pos_;
        std::string out;
        while (!done() && s_[pos_] != '"') {
            char c = s_[pos_++];
            if (c == '\\') {
                if (done()) break;
                char e = s_[pos_++];
                switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(std::string("unsupported escape \\") + e);
                }
            } else {
                out += c;
            }
        }
        if (done()) fail("unterminated string");
        ++pos_;
        return out;
    }

    Array array() {
        ++pos_;
        Array out;
        skip_ws();
        if (!done() && s_[pos_] == ']') { ++pos_; return out; }
        while (true) {
            out.push_back(value());
            skip_ws();
            if (done()) fail("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                skip_ws();
                if (!done() && s_[pos_] == ']') { ++pos_; return out; }
                continue;
            }
            if (s_[pos_] == ']') { ++pos_; return out; }
            fail("expected ',' or ']' in array");
        }
    }

    Value number() {
        std::size_t end = pos_;
        while (end < s_.size() && std::string_view("+-0123456789.eE_").find(s_[end]) != std::string_view::npos)
            ++end;
        std::string tok;
        for (char c : s_.substr(pos_, end - pos_))
            if (c != '_') tok += c;
        if (tok.empty()) fail("invalid value");
        if (tok.front() == '+') tok.erase(0, 1);
        pos_ = end;
        const char* b = tok.data();
        const char* e = tok.data() + tok.size();
        if (tok.find_first_of(".eE") == std::string::npos) {
            std::int64_t i = 0;
            auto [p, ec] = std::from_chars(b, e, i);
            if (ec != std::errc() || p != e) fail("invalid integer '" + tok + "'");
            return {i};
        }
        double d = 0;
        auto [p, ec] = std::from_chars(b, e, d);
        if (ec != std::errc() || p != e) fail("invalid number '" + tok + "'");
        return {d};
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_;
};

std::string format_double(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    std::string s(buf, p);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

struct TypeMismatch {
    std::string expected;
};

double as_double(const Value& v) {
    if (auto* d = std::get_if<double>(&v.v)) return *d;
    if (auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
    throw TypeMismatch{"a number"};
}

std::int64_t as_int(const Value& v) {
    if (auto* i = std::get_if<std::int64_t>(&v.v)) return *i;
    throw TypeMismatch{"an integer"};
}

bool as_bool(const Value& v) {
    if (auto* b = std::get_if<bool>(&v.v)) return *b;
    throw TypeMismatch{"a boolean"};
}

const std::string& as_string(const Value& v) {
    if (auto* s = std::get_if<std::string>(&v.v)) return *s;
    throw TypeMismatch{"a string"};
}

const Array& as_array(const Value& v) {
    if (auto* a = std::get_if<Array>(&v.v)) return *a;
    throw TypeMismatch{"an array"};
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F fmt) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ", ";
        s += fmt(xs[i]);
    }
    return s + "]";
}

struct Field {
    std::string name; // section.key
    std::function<void(ScenarioConfig&, const Value&)> set;
    std::function<std::string(const ScenarioConfig&)> show;
};

template <class Get>
Field real(std::string name, Get get) {
    return {std::move(name),
            [get](ScenarioConfig& c, const Value& v) { get(c) = as_double(v); },
            [get](const ScenarioConfig& c) { return format_double(get(const_cast<ScenarioConfig&>(c))); }};
}

template <class Get>
Field integer(std::string name, Get get) {
    return {std::move(name),
            [get](ScenarioConfig& c, const Value& v) {
                using T = std::remove_reference_t<decltype(get(c))>;
                const std::int64_t i = as_int(v);
                if (i < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
                    (i > 0 && static_cast<std::uint64_t>(i) > static_cast<std::uint64_t>(std::numeric_limits<T>::max())))
                    throw TypeMismatch{"an integer in range"};
                get(c) = static_cast<T>(i);
            },
            [get](const ScenarioConfig& c) { return std::to_string(get(const_cast<ScenarioConfig&>(c))); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"scenario.mode",
                     [](ScenarioConfig& c, const Value& v) {
                         auto m = parse_mode(as_string(v));
                         if (!m) throw TypeMismatch{"one of Baseline, IRL, FIRL, FIRL-D, FIRL-D-OR, FIRL-D-LM"};
                         c.mode = *m;
                     },
                     [](const ScenarioConfig& c) { return "\"" + std::string(to_string(c.mode)) + "\""; }});
        f.push_back({"scenario.seeds",
                     [](ScenarioConfig& c, const Value& v) {
                         std::vector<std::uint64_t> seeds;
                         for (const auto& x : as_array(v)) {
                             const std::int64_t i = as_int(x);
                             if (i < 0) throw TypeMismatch{"non-negative integers"};
                             seeds.push_back(static_cast<std::uint64_t>(i));
                         }
                         c.seeds = std::move(seeds);
                     },
                     [](const ScenarioConfig& c) {
                         return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
                     }});
        f.push_back(integer("scenario.training_epochs", [](ScenarioConfig& c) -> int& { return c.training_epochs; }));
        f.push_back({"scenario.trace",
                     [](ScenarioConfig& c, const Value& v) { c.trace = as_bool(v); },
                     nullptr});
        f.push_back({"scenario.output_dir",
                     [](ScenarioConfig& c, const Value& v) { c.output_dir = as_string(v); },
                     nullptr});

        f.push_back(real("traffic.loop_radius", [](ScenarioConfig& c) -> double& { return c.traffic.loop_radius; }));
        f.push_back(real("traffic.conflict_half_length", [](ScenarioConfig& c) -> double& { return c.traffic.conflict_half_length; }));
        f.push_back(real("traffic.vehicle_length", [](ScenarioConfig& c) -> double& { return c.traffic.vehicle_length; }));
        f.push_back(real("traffic.v_max", [](ScenarioConfig& c) -> double& { return c.traffic.v_max; }));
        f.push_back(real("traffic.b_emergency", [](ScenarioConfig& c) -> double& { return c.traffic.b_emergency; }));
        f.push_back(real("traffic.crash_threshold", [](ScenarioConfig& c) -> double& { return c.traffic.crash_threshold; }));
        f.push_back(real("traffic.lookahead", [](ScenarioConfig& c) -> double& { return c.traffic.lookahead; }));
        f.push_back(real("traffic.r_crash", [](ScenarioConfig& c) -> double& { return c.traffic.r_crash; }));
        f.push_back(real("traffic.dt", [](ScenarioConfig& c) -> double& { return c.traffic.dt; }));
        f.push_back(integer("traffic.max_steps", [](ScenarioConfig& c) -> int& { return c.traffic.max_steps; }));
        f.push_back(integer("traffic.vehicle_count", [](ScenarioConfig& c) -> int& { return c.traffic.vehicle_count; }));
        f.push_back(integer("traffic.learner_count", [](ScenarioConfig& c) -> int& { return c.traffic.learner_count; }));
        f.push_back(real("traffic.placement_jitter", [](ScenarioConfig& c) -> double& { return c.traffic.placement_jitter; }));

        f.push_back(real("idm.v0", [](ScenarioConfig& c) -> double& { return c.traffic.idm.v0; }));
        f.push_back(real("idm.time_headway", [](ScenarioConfig& c) -> double& { return c.traffic.idm.time_headway; }));
        f.push_back(real("idm.a_max", [](ScenarioConfig& c) -> double& { return c.traffic.idm.a_max; }));
        f.push_back(real("idm.b_comfort", [](ScenarioConfig& c) -> double& { return c.traffic.idm.b_comfort; }));
        f.push_back(real("idm.delta", [](ScenarioConfig& c) -> double& { return c.traffic.idm.delta; }));
        f.push_back(real("idm.s0", [](ScenarioConfig& c) -> double& { return c.traffic.idm.s0; }));

        f.push_back({"learner.action_set",
                     [](ScenarioConfig& c, const Value& v) {
                         std::vector<double> xs;
                         for (const auto& x : as_array(v)) xs.push_back(as_double(x));
                         c.learner.action_set = std::move(xs);
                     },
                     [](const ScenarioConfig& c) { return join(c.learner.action_set, format_double); }});
        f.push_back({"learner.hidden_sizes",
                     [](ScenarioConfig& c, const Value& v) {
                         std::vector<std::size_t> xs;
                         for (const auto& x : as_array(v)) {
                             const std::int64_t i = as_int(x);
                             if (i < 0) throw TypeMismatch{"non-negative integers"};
                             xs.push_back(static_cast<std::size_t>(i));
                         }
                         c.learner.hidden_sizes = std::move(xs);
                     },
                     [](const ScenarioConfig& c) {
                         return join(c.learner.hidden_sizes, [](std::size_t s) { return std::to_string(s); });
                     }});
        f.push_back(real("learner.learning_rate", [](ScenarioConfig& c) -> double& { return c.learner.learning_rate; }));
        f.push_back(real("learner.gamma", [](ScenarioConfig& c) -> double& { return c.learner.gamma; }));
        f.push_back(real("learner.epsilon_start", [](ScenarioConfig& c) -> double& { return c.learner.epsilon.start; }));
        f.push_back(real("learner.epsilon_end", [](ScenarioConfig& c) -> double& { return c.learner.epsilon.end; }));
        f.push_back(real("learner.epsilon_decay_epochs", [](ScenarioConfig& c) -> double& { return c.learner.epsilon.decay_epochs; }));
        f.push_back(integer("learner.replay_capacity", [](ScenarioConfig& c) -> std::size_t& { return c.learner.replay_capacity; }));
        f.push_back(integer("learner.target_sync_period", [](ScenarioConfig& c) -> int& { return c.learner.target_sync_period; }));

        f.push_back(integer("fednet.up_delay_epochs", [](ScenarioConfig& c) -> int& { return c.channel.up_delay_epochs; }));
        f.push_back(integer("fednet.down_delay_epochs", [](ScenarioConfig& c) -> int& { return c.channel.down_delay_epochs; }));
        f.push_back(integer("fednet.max_extra_delay_epochs", [](ScenarioConfig& c) -> int& { return c.channel.max_extra_delay_epochs; }));
        f.push_back(integer("fednet.merge_count", [](ScenarioConfig& c) -> int& { return c.channel.merge_count; }));
        f.push_back(integer("fednet.epoch_ticks", [](ScenarioConfig& c) -> Tick& { return c.channel.epoch_ticks; }));
        f.push_back({"fednet.server_learning_rate",
                     [](ScenarioConfig& c, const Value& v) { c.server_learning_rate = as_double(v); },
                     [](const ScenarioConfig& c) {
                         return c.server_learning_rate ? format_double(*c.server_learning_rate) : std::string("unset");
                     }});

        f.push_back(real("compare.window_fraction", [](ScenarioConfig& c) -> double& { return c.compare.window_fraction; }));
        f.push_back(real("compare.approach_fraction", [](ScenarioConfig& c) -> double& { return c.compare.approach_fraction; }));
        f.push_back(real("compare.trivial_fraction", [](ScenarioConfig& c) -> double& { return c.compare.trivial_fraction; }));
        f.push_back(real("compare.degrade_fraction", [](ScenarioConfig& c) -> double& { return c.compare.degrade_fraction; }));
        f.push_back(real("compare.seed_fraction", [](ScenarioConfig& c) -> double& { return c.compare.seed_fraction; }));
        std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.name < b.name; });
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& name) {
    const auto& f = fields();
    auto it = std::lower_bound(f.begin(), f.end(), name,
                               [](const Field& x, const std::string& n) { return x.name < n; });
    return it != f.end() && it->name == name ? &*it : nullptr;
}

std::string key_list(const std::vector<std::string>& keys) {
    std::string s;
    for (const auto& k : keys) s += (s.empty() ? "" : ", ") + k;
    return s;
}

} // namespace

FederationConfig ScenarioConfig::federation(std::uint64_t seed) const {
    FederationConfig f;
    f.mode = mode;
    f.traffic = traffic;
    f.learner = learner;
    f.channel = channel;
    f.server_learning_rate = server_learning_rate;
    f.epochs = training_epochs;
    f.seed = seed;
    f.record_trace = trace;
    return f;
}

void validate(const ScenarioConfig& c) {
    std::vector<std::string> bad;
    auto check = [&bad](bool ok, const char* key) {
        if (!ok) bad.emplace_back(key);
    };
    const auto& t = c.traffic;
    check(!c.seeds.empty(), "scenario.seeds");
    check(c.training_epochs >= 1, "scenario.training_epochs");

    check(t.loop_radius > 0 && std::isfinite(t.loop_radius), "traffic.loop_radius");
    check(t.conflict_half_length >= 0 && t.conflict_half_length < std::numbers::pi * t.loop_radius / 2.0,
          "traffic.conflict_half_length");
    check(t.vehicle_length > 0, "traffic.vehicle_length");
    check(t.v_max > 0, "traffic.v_max");
    check(t.b_emergency > 0, "traffic.b_emergency");
    check(t.crash_threshold >= 0, "traffic.crash_threshold");
    check(t.lookahead >= 0, "traffic.lookahead");
    check(t.r_crash >= 0, "traffic.r_crash");
    check(t.dt > 0, "traffic.dt");
    check(t.max_steps >= 1 && t.max_steps <= 1500, "traffic.max_steps");
    check(t.vehicle_count >= 2, "traffic.vehicle_count");
    check(t.learner_count >= 0 && 2 * t.learner_count <= t.vehicle_count, "traffic.learner_count");
    if (t.loop_radius > 0 && t.vehicle_count >= 2 && t.vehicle_length > 0) {
        const double spacing = 4.0 * std::numbers::pi * t.loop_radius / t.vehicle_count;
        check(t.placement_jitter >= 0 && 2.0 * t.placement_jitter + t.vehicle_length < spacing,
              "traffic.placement_jitter");
    }

    check(t.idm.v0 > 0, "idm.v0");
    check(t.idm.time_headway > 0, "idm.time_headway");
    check(t.idm.a_max > 0, "idm.a_max");
    check(t.idm.b_comfort > 0, "idm.b_comfort");
    check(t.idm.delta >= 1, "idm.delta");
    check(t.idm.s0 > 0, "idm.s0");

    const auto& l = c.learner;
    check(!l.action_set.empty() && std::is_sorted(l.action_set.begin(), l.action_set.end()),
          "learner.action_set");
    check(std::all_of(l.hidden_sizes.begin(), l.hidden_sizes.end(), [](std::size_t h) { return h > 0; }),
          "learner.hidden_sizes");
    check(l.learning_rate > 0, "learner.learning_rate");
    check(l.gamma >= 0 && l.gamma < 1, "learner.gamma");
    check(l.epsilon.start >= 0 && l.epsilon.start <= 1, "learner.epsilon_start");
    check(l.epsilon.end >= 0 && l.epsilon.end <= 1, "learner.epsilon_end");
    check(l.epsilon.decay_epochs >= 0, "learner.epsilon_decay_epochs");
    check(l.replay_capacity >= kMinibatchSize, "learner.replay_capacity");
    check(l.target_sync_period >= 1, "learner.target_sync_period");

    check(c.channel.up_delay_epochs >= 0, "fednet.up_delay_epochs");
    check(c.channel.down_delay_epochs >= 0, "fednet.down_delay_epochs");
    check(c.channel.max_extra_delay_epochs >= 0, "fednet.max_extra_delay_epochs");
    check(c.channel.merge_count >= 1, "fednet.merge_count");
    check(c.channel.epoch_ticks >= 1, "fednet.epoch_ticks");
    check(!c.server_learning_rate || *c.server_learning_rate > 0, "fednet.server_learning_rate");

    auto fraction = [](double x) { return x > 0 && x <= 1; };
    check(fraction(c.compare.window_fraction), "compare.window_fraction");
    check(c.compare.approach_fraction >= 0, "compare.approach_fraction");
    check(c.compare.trivial_fraction >= 0, "compare.trivial_fraction");
    check(c.compare.degrade_fraction >= 0, "compare.degrade_fraction");
    check(fraction(c.compare.seed_fraction), "compare.seed_fraction");

    if (!bad.empty()) throw ValidationError("invalid configuration values: " + key_list(bad), bad);
}

ScenarioConfig parse_config(std::string_view text) {
    ScenarioConfig cfg;
    std::vector<std::string> bad;
    std::vector<std::string> problems;
    std::vector<std::string> seen;
    std::string section;
    int line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;

        if (line.front() == '[') {
            const auto close = line.find(']');
            if (close == std::string_view::npos)
                throw ValidationError("line " + std::to_string(line_no) + ": unterminated section header", {});
            section = std::string(trim(line.substr(1, close - 1)));
            LineParser rest(line.substr(close + 1), line_no);
            rest.finish();
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ValidationError("line " + std::to_string(line_no) + ": expected key = value", {});
        std::string key(trim(line.substr(0, eq)));
        if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
        LineParser p(line.substr(eq + 1), line_no);
        Value v = p.value();
        p.finish();

        const std::string name = section.empty() ? key : section + "." + key;
        if (std::find(seen.begin(), seen.end(), name) != seen.end()) {
            bad.push_back(name);
            problems.push_back(name + " (duplicate)");
            continue;
        }
        seen.push_back(name);
        const Field* f = find_field(name);
        if (!f) {
            bad.push_back(name);
            problems.push_back(name + " (unknown key)");
            continue;
        }
        try {
            f->set(cfg, v);
        } catch (const TypeMismatch& tm) {
            bad.push_back(name);
            problems.push_back(name + " (expected " + tm.expected + ")");
        }
    }
    if (!bad.empty()) throw ValidationError("invalid configuration: " + key_list(problems), bad);
    validate(cfg);
    return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string canonical_form(const ScenarioConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        if (!f.show) continue;
        out += f.name + " = " + f.show(cfg) + "\n";
    }
    return out;
}

std::string fingerprint(const ScenarioConfig& cfg) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : canonical_form(cfg)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace fedtraffic
