#include "fedtraffic/federation.hpp"

#include "fedtraffic/errors.hpp"
#include "fedtraffic/rng.hpp"

#include <json.hpp>

#include <istream>
#include <ostream>

namespace fedtraffic {

std::string_view to_string(Mode m) {
    switch (m) {
    case Mode::Baseline: return "Baseline";
    case Mode::IRL: return "IRL";
    case Mode::FIRL: return "FIRL";
    case Mode::FIRL_D: return "FIRL-D";
    case Mode::FIRL_D_OR: return "FIRL-D-OR";
    case Mode::FIRL_D_LM: return "FIRL-D-LM";
    }
    return "?";
}

std::optional<Mode> parse_mode(std::string_view name) {
    for (Mode m : kAllModes)
        if (to_string(m) == name) return m;
    return std::nullopt;
}

bool is_federated(Mode m) { return m != Mode::Baseline && m != Mode::IRL; }

ChannelVariant channel_for(Mode m) {
    switch (m) {
    case Mode::FIRL_D: return ChannelVariant::SyncDelay;
    case Mode::FIRL_D_OR: return ChannelVariant::OutOfOrder;
    case Mode::FIRL_D_LM: return ChannelVariant::LocalMerge;
    default: return ChannelVariant::Perfect;
    }
}

namespace {

constexpr std::array<std::pair<TraceEvent::Kind, std::string_view>, 7> kKindNames{{
    {TraceEvent::Kind::GradSend, "grad_send"},
    {TraceEvent::Kind::GradDeliver, "grad_deliver"},
    {TraceEvent::Kind::Aggregate, "aggregate"},
    {TraceEvent::Kind::ModelSend, "model_send"},
    {TraceEvent::Kind::ModelApply, "model_apply"},
    {TraceEvent::Kind::LocalUpdate, "local_update"},
    {TraceEvent::Kind::EpochEnd, "epoch_end"},
}};

} // namespace

std::string_view to_string(TraceEvent::Kind k) {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "?";
}

std::optional<TraceEvent::Kind> parse_event_kind(std::string_view name) {
    for (const auto& [kind, n] : kKindNames)
        if (n == name) return kind;
    return std::nullopt;
}

void write_trace(std::ostream& os, const std::vector<TraceEvent>& trace) {
    for (const auto& e : trace) {
        nlohmann::ordered_json j;
        j["t"] = to_seconds(e.tick);
        j["kind"] = to_string(e.kind);
        j["agent"] = e.agent >= 0 ? nlohmann::ordered_json(e.agent) : nlohmann::ordered_json();
        j["round"] = e.round >= 0 ? nlohmann::ordered_json(e.round) : nlohmann::ordered_json();
        j["version"] = e.version >= 0 ? nlohmann::ordered_json(e.version) : nlohmann::ordered_json();
        j["latency"] = e.latency ? nlohmann::ordered_json(to_seconds(*e.latency)) : nlohmann::ordered_json();
        j["msg"] = e.msg;
        os << j.dump() << '\n';
    }
}

std::vector<TraceEvent> read_trace(std::istream& is) {
    std::vector<TraceEvent> out;
    std::string line;
    auto ticks = [](double seconds) { return static_cast<Tick>(std::llround(seconds * 10.0)); };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        TraceEvent e;
        e.tick = ticks(j.at("t").get<double>());
        const auto kind = parse_event_kind(j.at("kind").get<std::string>());
        if (!kind) throw std::runtime_error("unknown trace event kind in: " + line);
        e.kind = *kind;
        if (!j.at("agent").is_null()) e.agent = j.at("agent").get<int>();
        if (!j.at("round").is_null()) e.round = j.at("round").get<std::int64_t>();
        if (!j.at("version").is_null()) e.version = j.at("version").get<std::int64_t>();
        if (!j.at("latency").is_null()) e.latency = ticks(j.at("latency").get<double>());
        e.msg = j.at("msg").get<std::uint64_t>();
        out.push_back(e);
    }
    return out;
}

namespace {

struct Agent {
    int id = 0;
    int vehicle_id = 0;
    QNetwork model;
    QNetwork target;
    ReplayBuffer buffer;
    Rng rng;
    UploadAccumulator accumulator;
    std::int64_t rounds = 0;
    std::int64_t uploads = 0;
    std::size_t last_action = 0;
    Observation last_obs{};
};

class Federation {
public:
    Federation(const FederationConfig& cfg, const FederationHooks& hooks)
        : cfg_(cfg), hooks_(hooks), traffic_(make_traffic(cfg)), channel_(cfg.channel),
          channel_rng_(mix_seed(cfg.seed, 2)) {
        validate(cfg_.learner);
        channel_.variant = channel_for(cfg_.mode);
        validate(channel_);
        if (cfg_.epochs < 1) throw std::invalid_argument("epochs must be >= 1");

        Rng init_rng(mix_seed(cfg_.seed, 1));
        const QNetwork initial = QNetwork::glorot(cfg_.learner.layer_sizes(), init_rng);
        const WorldState probe = traffic_.reset_epoch(world_seed());
        const int merge = channel_.variant == ChannelVariant::LocalMerge ? channel_.merge_count : 1;
        for (const auto& v : probe.vehicles) {
            if (!v.controller.is_learner()) continue;
            const int k = v.controller.agent;
            agents_.push_back(Agent{k, v.id, initial, initial, ReplayBuffer(cfg_.learner.replay_capacity),
                                    Rng(mix_seed(cfg_.seed, 100 + static_cast<std::uint64_t>(k))),
                                    UploadAccumulator(merge)});
        }
        if (is_federated(cfg_.mode) && !agents_.empty())
            server_.emplace(initial, cfg_.server_learning_rate.value_or(cfg_.learner.learning_rate),
                            static_cast<int>(agents_.size()));
    }

    FederationResult run() {
        FederationResult result;
        Controls controls;
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            const double epsilon = cfg_.learner.epsilon.at(epoch);
            WorldState world = traffic_.reset_epoch(world_seed(), epoch);
            EpochMetrics m;
            m.epoch_index = epoch;
            double speed_sum = 0.0;

            while (true) {
                controls.assign(world.vehicles.size(), std::nullopt);
                traffic_.baseline_controls(world, traffic_.intersection_gate(world), controls);
                for (auto& a : agents_) {
                    a.last_obs = traffic_.observe(world, a.vehicle_id);
                    a.last_action = act(a.model, a.last_obs, epsilon, a.rng);
                    controls[static_cast<std::size_t>(a.vehicle_id)] = cfg_.learner.action_set[a.last_action];
                }
                WorldState next = traffic_.step(world, controls);
                const double r = traffic_.reward(world, next);
                for (auto& a : agents_)
                    a.buffer.push({a.last_obs, a.last_action, r, traffic_.observe(next, a.vehicle_id),
                                   next.crashed});
                world = std::move(next);
                ++tick_;

                speed_sum += traffic_.mean_speed(world);
                m.cumulative_reward += r;
                ++m.steps;

                if (tick_ % kGradientPeriodSteps == 0) gradient_round();
                deliver(tick_);

                if (world.crashed || world.step_index >= cfg_.traffic.max_steps) break;
            }
            m.crashed = world.crashed;
            m.mean_speed = speed_sum / m.steps;
            result.epochs.push_back(m);
            record({.tick = tick_, .kind = TraceEvent::Kind::EpochEnd, .round = epoch});
        }
        drain();

        for (auto& a : agents_) result.agent_models.push_back(a.model);
        if (server_) result.global_model = server_->global_model();
        result.trace = std::move(trace_);
        result.messages_sent = sent_;
        result.messages_delivered = delivered_;
        return result;
    }

private:
    static Traffic make_traffic(const FederationConfig& cfg) {
        TrafficParams p = cfg.traffic;
        if (cfg.mode == Mode::Baseline) p.learner_count = 0;
        return Traffic(p);
    }

    std::uint64_t world_seed() const { return mix_seed(cfg_.seed, 0); }

    void record(TraceEvent e) {
        if (cfg_.record_trace) trace_.push_back(e);
    }

    void model_changed(const Agent& a) {
        if (hooks_.on_agent_model) hooks_.on_agent_model(a.id, tick_, a.model);
    }

    void gradient_round() {
        std::vector<Agent*> synced;
        for (auto& a : agents_) {
            if (a.buffer.size() < kMinibatchSize) continue;
            Gradient g = compute_gradient(a.model, a.target, a.buffer.sample(a.rng), cfg_.learner.gamma);
            g.source_agent = a.id;
            g.round_index = a.rounds++;
            route(a, std::move(g));
            if (a.rounds % cfg_.learner.target_sync_period == 0) synced.push_back(&a);
        }
        // Deliver zero-latency traffic before syncing targets so that every
        // mode snapshots the model the agent will act on next.
        deliver(tick_);
        for (Agent* a : synced) a->target = a->model;
    }

    void route(Agent& a, Gradient g) {
        if (cfg_.mode == Mode::IRL) {
            const auto round = g.round_index;
            a.model = apply_gradient(std::move(a.model), g, cfg_.learner.learning_rate);
            record({.tick = tick_, .kind = TraceEvent::Kind::LocalUpdate, .agent = a.id, .round = round});
            model_changed(a);
            return;
        }
        std::optional<Gradient> upload = a.accumulator.offer(std::move(g));
        if (!upload) return;
        GradientMsg msg;
        msg.payload = std::move(*upload);
        msg.agent_id = a.id;
        msg.round_index = a.uploads++;
        msg.send_tick = tick_;
        msg.id = next_msg_id_++;
        assign_delivery(channel_, msg, channel_rng_);
        record({.tick = tick_, .kind = TraceEvent::Kind::GradSend, .agent = a.id, .round = msg.round_index,
                .latency = msg.deliver_tick - msg.send_tick, .msg = msg.id});
        ++sent_;
        uplink_.push(std::move(msg));
    }

    void deliver(Tick now) {
        while (true) {
            auto ups = uplink_.deliver_due(now);
            for (auto& msg : ups) {
                ++delivered_;
                record({.tick = now, .kind = TraceEvent::Kind::GradDeliver, .agent = msg.agent_id,
                        .round = msg.round_index, .latency = msg.deliver_tick - msg.send_tick, .msg = msg.id});
                for (auto& agg : server_->ingest(msg, now)) {
                    record({.tick = now, .kind = TraceEvent::Kind::Aggregate, .round = agg.round,
                            .version = agg.version});
                    for (auto& down : agg.downlink) {
                        down.id = next_msg_id_++;
                        assign_delivery(channel_, down, channel_rng_);
                        record({.tick = now, .kind = TraceEvent::Kind::ModelSend, .agent = down.destination_agent,
                                .version = down.version, .latency = down.deliver_tick - down.send_tick,
                                .msg = down.id});
                        ++sent_;
                        downlink_.push(std::move(down));
                    }
                }
            }
            auto downs = downlink_.deliver_due(now);
            for (auto& msg : downs) {
                ++delivered_;
                Agent& a = agents_[static_cast<std::size_t>(msg.destination_agent)];
                a.model = apply_model_msg(a.model, msg, channel_);
                record({.tick = now, .kind = TraceEvent::Kind::ModelApply, .agent = a.id, .version = msg.version,
                        .latency = msg.deliver_tick - msg.send_tick, .msg = msg.id});
                model_changed(a);
            }
            if (ups.empty() && downs.empty()) break;
        }
    }

    void drain() {
        while (true) {
            std::optional<Tick> next = uplink_.next_delivery();
            if (auto d = downlink_.next_delivery(); d && (!next || *d < *next)) next = d;
            if (!next) break;
            tick_ = std::max(tick_, *next);
            deliver(tick_);
        }
    }

    const FederationConfig& cfg_;
    const FederationHooks& hooks_;
    Traffic traffic_;
    ChannelModel channel_;
    Rng channel_rng_;
    std::vector<Agent> agents_;
    std::optional<FedServer> server_;
    TransitQueue<GradientMsg> uplink_;
    TransitQueue<ModelMsg> downlink_;
    std::vector<TraceEvent> trace_;
    Tick tick_ = 0;
    std::uint64_t next_msg_id_ = 0;
    std::uint64_t sent_ = 0;
    std::uint64_t delivered_ = 0;
};

} // namespace

FederationResult run_federated_epochs(const FederationConfig& cfg, const FederationHooks& hooks) {
    return Federation(cfg, hooks).run();
}

} // namespace fedtraffic
