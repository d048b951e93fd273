#pragma once

#include "fedtraffic/learner.hpp"
#include "fedtraffic/qnetwork.hpp"
#include "fedtraffic/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fedtraffic {

// Simulated time is counted in integer ticks of one simulation step (0.1 s) so
// that channel latencies are exact.
using Tick = std::int64_t;
inline constexpr double kTickSeconds = 0.1;
inline double to_seconds(Tick t) { return static_cast<double>(t) / 10.0; }

enum class ChannelVariant { Perfect, SyncDelay, OutOfOrder, LocalMerge };

std::string_view to_string(ChannelVariant v);

struct ChannelModel {
    ChannelVariant variant = ChannelVariant::Perfect;
    int up_delay_epochs = 4;
    int down_delay_epochs = 2;
    int max_extra_delay_epochs = 3; // OutOfOrder jitter, uniform in {0..J}
    int merge_count = 6;            // LocalMerge minibatches per upload
    Tick epoch_ticks = 1500;        // 150 s

    static ChannelModel perfect() { return {}; }
    static ChannelModel sync_delay() { return {.variant = ChannelVariant::SyncDelay}; }
    static ChannelModel out_of_order() { return {.variant = ChannelVariant::OutOfOrder}; }
    static ChannelModel local_merge() { return {.variant = ChannelVariant::LocalMerge}; }
};

void validate(const ChannelModel& ch);

struct GradientMsg {
    Gradient payload;
    int agent_id = 0;
    std::int64_t round_index = 0; // per-agent upload sequence number
    Tick send_tick = 0;
    Tick deliver_tick = 0;
    std::uint64_t id = 0;
};

struct ModelMsg {
    std::shared_ptr<const std::vector<std::uint8_t>> payload;
    std::int64_t version = 1;
    Tick send_tick = 0;
    Tick deliver_tick = 0;
    int destination_agent = 0;
    std::uint64_t id = 0;
};

// Sets deliver_tick from send_tick. OutOfOrder consumes exactly one rng draw
// per message; the other variants consume none.
void assign_delivery(const ChannelModel& ch, GradientMsg& msg, Rng& rng);
void assign_delivery(const ChannelModel& ch, ModelMsg& msg, Rng& rng);

// In-transit messages of one kind.
template <class Msg>
class TransitQueue {
public:
    void push(Msg msg) { items_.push_back(std::move(msg)); }
    bool empty() const { return items_.empty(); }
    std::size_t size() const { return items_.size(); }

    std::optional<Tick> next_delivery() const {
        if (items_.empty()) return std::nullopt;
        Tick best = items_.front().deliver_tick;
        for (const auto& m : items_) best = std::min(best, m.deliver_tick);
        return best;
    }

    // Removes and returns every message with deliver_tick <= now, ordered by
    // (deliver_tick, send_tick, id).
    std::vector<Msg> deliver_due(Tick now) {
        std::vector<Msg> due;
        auto split = std::stable_partition(items_.begin(), items_.end(),
                                           [now](const Msg& m) { return m.deliver_tick > now; });
        std::move(split, items_.end(), std::back_inserter(due));
        items_.erase(split, items_.end());
        std::sort(due.begin(), due.end(), [](const Msg& a, const Msg& b) {
            if (a.deliver_tick != b.deliver_tick) return a.deliver_tick < b.deliver_tick;
            if (a.send_tick != b.send_tick) return a.send_tick < b.send_tick;
            return a.id < b.id;
        });
        return due;
    }

private:
    std::vector<Msg> items_;
};

// Overwrites the agent's model with the payload, with no version check: a
// stale packet arriving late replaces a newer model.
QNetwork apply_model_msg(const QNetwork& agent_model, const ModelMsg& msg,
                         const ChannelModel& channel);

// Whether an agent that has produced `minibatches_done` minibatches (counting
// the current one) uploads now.
bool local_merge_schedule(const ChannelModel& ch, std::int64_t minibatches_done);

// Collects per-minibatch gradients and releases one merged upload every
// `merge_count` of them.
class UploadAccumulator {
public:
    explicit UploadAccumulator(int merge_count);
    std::optional<Gradient> offer(Gradient g);
    std::size_t pending() const { return pending_.size(); }

private:
    int merge_count_;
    std::vector<Gradient> pending_;
};

class FedServer {
public:
    struct Aggregation {
        std::int64_t round = 0;
        std::int64_t version = 0;
        std::vector<ModelMsg> downlink;
    };

    FedServer(QNetwork initial_model, double learning_rate, int learning_agents);

    // Stores the gradient; aggregates every consecutive round (from the next
    // expected one) whose quorum is complete. Gradients within a round are
    // averaged in agent-id order.
    std::vector<Aggregation> ingest(const GradientMsg& msg, Tick now);

    const QNetwork& global_model() const { return global_; }
    std::int64_t version() const { return version_; }
    std::int64_t next_round() const { return next_round_; }
    std::size_t pending_rounds() const { return pending_.size(); }
    std::size_t pending_in(std::int64_t round) const;

private:
    QNetwork global_;
    std::int64_t version_ = 0;
    std::int64_t next_round_ = 0;
    double learning_rate_;
    int quorum_;
    std::map<std::int64_t, std::map<int, Gradient>> pending_;
};

} // namespace fedtraffic
