#include "fedtraffic/fednet.hpp"

#include "fedtraffic/errors.hpp"

#include <string>

namespace fedtraffic {

std::string_view to_string(ChannelVariant v) {
    switch (v) {
    case ChannelVariant::Perfect: return "Perfect";
    case ChannelVariant::SyncDelay: return "SyncDelay";
    case ChannelVariant::OutOfOrder: return "OutOfOrder";
    case ChannelVariant::LocalMerge: return "LocalMerge";
    }
    return "?";
}

void validate(const ChannelModel& ch) {
    if (ch.up_delay_epochs < 0 || ch.down_delay_epochs < 0 || ch.max_extra_delay_epochs < 0)
        throw std::invalid_argument("channel delays must be non-negative");
    if (ch.merge_count < 1) throw std::invalid_argument("merge_count must be >= 1");
    if (ch.epoch_ticks < 1) throw std::invalid_argument("epoch duration must be positive");
}

namespace {

Tick latency(const ChannelModel& ch, int base_epochs, Rng& rng) {
    switch (ch.variant) {
    case ChannelVariant::Perfect:
    case ChannelVariant::LocalMerge: return 0;
    case ChannelVariant::SyncDelay: return base_epochs * ch.epoch_ticks;
    case ChannelVariant::OutOfOrder: {
        const auto extra = static_cast<Tick>(
            rng.index(static_cast<std::uint64_t>(ch.max_extra_delay_epochs) + 1));
        return (base_epochs + extra) * ch.epoch_ticks;
    }
    }
    return 0;
}

} // namespace

void assign_delivery(const ChannelModel& ch, GradientMsg& msg, Rng& rng) {
    msg.deliver_tick = msg.send_tick + latency(ch, ch.up_delay_epochs, rng);
}

void assign_delivery(const ChannelModel& ch, ModelMsg& msg, Rng& rng) {
    msg.deliver_tick = msg.send_tick + latency(ch, ch.down_delay_epochs, rng);
}

QNetwork apply_model_msg(const QNetwork& agent_model, const ModelMsg& msg,
                         const ChannelModel& /*channel*/) {
    if (!msg.payload) throw DeserializationError("model message has no payload");
    QNetwork incoming = deserialize(*msg.payload);
    if (!incoming.same_layout(agent_model))
        throw DeserializationError("model payload layout differs from the agent's network");
    return incoming;
}

bool local_merge_schedule(const ChannelModel& ch, std::int64_t minibatches_done) {
    const int every = ch.variant == ChannelVariant::LocalMerge ? ch.merge_count : 1;
    return minibatches_done > 0 && minibatches_done % every == 0;
}

UploadAccumulator::UploadAccumulator(int merge_count) : merge_count_(merge_count) {
    if (merge_count < 1) throw std::invalid_argument("merge_count must be >= 1");
}

std::optional<Gradient> UploadAccumulator::offer(Gradient g) {
    pending_.push_back(std::move(g));
    if (static_cast<int>(pending_.size()) < merge_count_) return std::nullopt;
    Gradient merged = merge_gradients(pending_);
    pending_.clear();
    return merged;
}

FedServer::FedServer(QNetwork initial_model, double learning_rate, int learning_agents)
    : global_(std::move(initial_model)), learning_rate_(learning_rate), quorum_(learning_agents) {
    if (learning_agents < 1) throw std::invalid_argument("server needs at least one agent");
    if (!(learning_rate > 0)) throw std::invalid_argument("server learning rate must be positive");
}

std::size_t FedServer::pending_in(std::int64_t round) const {
    auto it = pending_.find(round);
    return it == pending_.end() ? 0 : it->second.size();
}

std::vector<FedServer::Aggregation> FedServer::ingest(const GradientMsg& msg, Tick now) {
    if (msg.agent_id < 0 || msg.agent_id >= quorum_)
        throw std::invalid_argument("gradient from unknown agent " + std::to_string(msg.agent_id));
    if (msg.payload.values.size() != global_.parameters().size())
        throw ShapeError("gradient length does not match the global model");
    const auto existing = pending_.find(msg.round_index);
    if (msg.round_index < next_round_ ||
        (existing != pending_.end() && existing->second.contains(msg.agent_id)))
        throw DuplicateGradient("duplicate gradient for agent " + std::to_string(msg.agent_id) +
                                " round " + std::to_string(msg.round_index));
    pending_[msg.round_index].emplace(msg.agent_id, msg.payload);

    std::vector<Aggregation> out;
    for (auto it = pending_.find(next_round_);
         it != pending_.end() && static_cast<int>(it->second.size()) == quorum_;
         it = pending_.find(next_round_)) {
        std::vector<Gradient> round;
        round.reserve(it->second.size());
        for (auto& [agent, g] : it->second) round.push_back(std::move(g));
        global_ = apply_gradient(std::move(global_), merge_gradients(round), learning_rate_);
        ++version_;

        Aggregation agg;
        agg.round = next_round_;
        agg.version = version_;
        auto payload = std::make_shared<const std::vector<std::uint8_t>>(serialize(global_));
        for (int a = 0; a < quorum_; ++a) {
            ModelMsg m;
            m.payload = payload;
            m.version = version_;
            m.send_tick = now;
            m.deliver_tick = now;
            m.destination_agent = a;
            agg.downlink.push_back(std::move(m));
        }
        out.push_back(std::move(agg));
        pending_.erase(it);
        ++next_round_;
    }
    return out;
}

} // namespace fedtraffic
