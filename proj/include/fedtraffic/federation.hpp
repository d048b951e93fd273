#pragma once

#include "fedtraffic/fednet.hpp"
#include "fedtraffic/learner.hpp"
#include "fedtraffic/traffic.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedtraffic {

enum class Mode { Baseline, IRL, FIRL, FIRL_D, FIRL_D_OR, FIRL_D_LM };

inline constexpr std::array<Mode, 6> kAllModes{Mode::Baseline, Mode::IRL,    Mode::FIRL,
                                               Mode::FIRL_D,   Mode::FIRL_D_OR, Mode::FIRL_D_LM};

std::string_view to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view name);
bool is_federated(Mode m);
// Channel variant used by a federated mode.
ChannelVariant channel_for(Mode m);

struct TraceEvent {
    enum class Kind { GradSend, GradDeliver, Aggregate, ModelSend, ModelApply, LocalUpdate, EpochEnd };
    Tick tick = 0;
    Kind kind = Kind::EpochEnd;
    int agent = -1;
    std::int64_t round = -1;
    std::int64_t version = -1;
    std::optional<Tick> latency{};
    std::uint64_t msg = 0;
};

std::string_view to_string(TraceEvent::Kind k);
std::optional<TraceEvent::Kind> parse_event_kind(std::string_view name);

// One JSON object per line:
//   {"t":625.6,"kind":"grad_deliver","agent":3,"round":0,"version":null,
//    "latency":600.0,"msg":12}
// Absent fields are null; times and latencies are simulated seconds.
void write_trace(std::ostream& os, const std::vector<TraceEvent>& trace);
std::vector<TraceEvent> read_trace(std::istream& is);

struct EpochMetrics {
    int epoch_index = 0;
    double mean_speed = 0.0;
    bool crashed = false;
    int steps = 0;
    double cumulative_reward = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct FederationConfig {
    Mode mode = Mode::FIRL;
    TrafficParams traffic{};
    LearnerConfig learner{};
    ChannelModel channel{};           // delays and merge count; variant follows mode
    std::optional<double> server_learning_rate; // defaults to learner.learning_rate
    int epochs = 1;
    std::uint64_t seed = 1;
    bool record_trace = true;
};

struct FederationResult {
    std::vector<EpochMetrics> epochs;
    std::vector<QNetwork> agent_models;
    std::optional<QNetwork> global_model;
    std::vector<TraceEvent> trace;
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_delivered = 0;
};

struct FederationHooks {
    // Called whenever an agent's acting model changes (local update or model
    // packet applied).
    std::function<void(int agent, Tick tick, const QNetwork& model)> on_agent_model;
};

// Drives the traffic loop for `epochs` epochs. Learner vehicles act
// epsilon-greedily on their current local model and compute one minibatch
// gradient every kGradientPeriodSteps steps. IRL applies gradients locally;
// the federated modes route them through the channel to the server. After
// the last epoch every in-flight message is delivered.
FederationResult run_federated_epochs(const FederationConfig& cfg, const FederationHooks& hooks = {});

} // namespace fedtraffic
