#include "fedtraffic/learner.hpp"

#include "fedtraffic/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedtraffic {

Minibatch::Minibatch(std::vector<Transition> items) : items_(std::move(items)) {
    if (items_.size() != kMinibatchSize)
        throw ShapeError("a minibatch holds exactly " + std::to_string(kMinibatchSize) +
                         " transitions, got " + std::to_string(items_.size()));
}

Minibatch Minibatch::for_testing(std::vector<Transition> items) {
    if (items.empty()) throw ShapeError("empty minibatch");
    Minibatch b;
    b.items_ = std::move(items);
    b.test_only_ = true;
    return b;
}

double EpsilonSchedule::at(int epoch) const {
    if (decay_epochs <= 0.0) return end;
    const double frac = std::min(1.0, static_cast<double>(epoch) / decay_epochs);
    return start + (end - start) * frac;
}

std::vector<std::size_t> LearnerConfig::layer_sizes() const {
    std::vector<std::size_t> sizes{std::tuple_size_v<Observation>};
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(action_set.size());
    return sizes;
}

void validate(const LearnerConfig& cfg) {
    if (cfg.action_set.empty() || !std::is_sorted(cfg.action_set.begin(), cfg.action_set.end()))
        throw std::invalid_argument("action_set must be non-empty and sorted");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
    if (cfg.replay_capacity < kMinibatchSize)
        throw std::invalid_argument("replay_capacity must be at least the minibatch size");
    if (cfg.target_sync_period < 1) throw std::invalid_argument("target_sync_period must be >= 1");
    for (auto h : cfg.hidden_sizes)
        if (h == 0) throw std::invalid_argument("hidden sizes must be positive");
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::size_t act(const QNetwork& net, const Observation& obs, double epsilon, Rng& rng) {
    const double u = rng.uniform01();
    const std::size_t random_action = rng.index(net.output_size());
    if (u < epsilon) return random_action;
    thread_local std::vector<double> acts;
    net.forward_into(obs, acts);
    return argmax(std::span<const double>(acts).last(net.output_size()));
}

namespace {

void check_layouts(const QNetwork& net, const QNetwork& target_net) {
    if (!net.same_layout(target_net)) throw ShapeError("online and target networks differ in layout");
    if (net.input_size() != std::tuple_size_v<Observation>)
        throw ShapeError("network input must match the observation size");
}

void check_batch(const Minibatch& batch) {
    if (batch.size() != kMinibatchSize && !batch.test_only())
        throw ShapeError("gradient requires a full minibatch");
}

struct Scratch {
    std::vector<double> acts;
    std::vector<double> target_acts;
    std::vector<double> delta;
    std::vector<double> delta_next;
};

double td_target(const QNetwork& target_net, const Transition& t, double gamma,
                 std::vector<double>& scratch) {
    if (t.terminal) return t.reward;
    target_net.forward_into(t.next_obs, scratch);
    const auto q = std::span<const double>(scratch).last(target_net.output_size());
    return t.reward + gamma * *std::max_element(q.begin(), q.end());
}

// Adds residual * dQ(obs, a)/dparams into grad. Returns the residual.
double accumulate_sample(const QNetwork& net, const QNetwork& target_net, const Transition& t,
                         double gamma, Scratch& s, double* grad) {
    const auto& sizes = net.layer_sizes();
    const std::size_t layers = net.layer_count();
    if (t.action_index >= net.output_size()) throw ShapeError("action index out of range");

    const double y = td_target(target_net, t, gamma, s.target_acts);
    net.forward_into(t.obs, s.acts);
    const double q = s.acts[s.acts.size() - net.output_size() + t.action_index];
    const double residual = q - y;

    const double* params = net.parameters().data();
    // Output-layer error is nonzero only at the taken action.
    s.delta.assign(sizes[layers], 0.0);
    s.delta[t.action_index] = residual;

    std::size_t act_end = s.acts.size() - sizes[layers];
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = sizes[l];
        const std::size_t out = sizes[l + 1];
        const double* x = l == 0 ? t.obs.data() : s.acts.data() + (act_end - in);
        double* gW = grad + net.weight_offset(l);
        double* gb = grad + net.bias_offset(l);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = s.delta[o];
            if (d == 0.0) continue;
            gb[o] += d;
            double* row = gW + o * in;
            for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
        }
        if (l == 0) break;
        const double* W = params + net.weight_offset(l);
        s.delta_next.assign(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = s.delta[o];
            if (d == 0.0) continue;
            const double* row = W + o * in;
            for (std::size_t i = 0; i < in; ++i) s.delta_next[i] += d * row[i];
        }
        for (std::size_t i = 0; i < in; ++i) s.delta_next[i] *= 1.0 - x[i] * x[i];
        s.delta.swap(s.delta_next);
        act_end -= in;
    }
    return residual;
}

Gradient finish(const QNetwork& net, std::vector<double> values, std::size_t batch_size) {
    const double scale = 2.0 / static_cast<double>(batch_size);
    for (auto& v : values) v *= scale;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const std::size_t begin = net.weight_offset(l);
        const std::size_t end = l + 1 < net.layer_count() ? net.weight_offset(l + 1) : values.size();
        for (std::size_t k = begin; k < end; ++k)
            if (!std::isfinite(values[k]))
                throw NumericError("non-finite gradient in layer " + std::to_string(l), l);
    }
    Gradient g;
    g.values = std::move(values);
    return g;
}

constexpr std::size_t kGradientChunks = 8;

bool omp_in_parallel_guard() {
#ifdef _OPENMP
    return omp_in_parallel() != 0;
#else
    return false;
#endif
}

} // namespace

double td_loss(const QNetwork& net, const QNetwork& target_net, const Minibatch& batch,
               double gamma) {
    check_layouts(net, target_net);
    std::vector<double> scratch;
    double sum = 0.0;
    for (const auto& t : batch.items()) {
        const double y = td_target(target_net, t, gamma, scratch);
        const double q = net.forward(t.obs).at(t.action_index);
        sum += (q - y) * (q - y);
    }
    return sum / static_cast<double>(batch.size());
}

Gradient compute_gradient_serial(const QNetwork& net, const QNetwork& target_net,
                                 const Minibatch& batch, double gamma) {
    check_layouts(net, target_net);
    check_batch(batch);
    std::vector<double> grad(net.parameters().size(), 0.0);
    Scratch s;
    for (const auto& t : batch.items()) accumulate_sample(net, target_net, t, gamma, s, grad.data());
    return finish(net, std::move(grad), batch.size());
}

Gradient compute_gradient(const QNetwork& net, const QNetwork& target_net,
                          const Minibatch& batch, double gamma) {
    check_layouts(net, target_net);
    check_batch(batch);
    const std::size_t n_params = net.parameters().size();
    const std::size_t n = batch.size();
    const std::size_t chunks = std::min(kGradientChunks, n);
    std::vector<double> partial(chunks * n_params, 0.0);
    const auto items = batch.items();

    bool failed = false;
#pragma omp parallel for schedule(static) if (!omp_in_parallel_guard())
    for (std::size_t c = 0; c < chunks; ++c) {
        Scratch s;
        const std::size_t begin = c * n / chunks;
        const std::size_t end = (c + 1) * n / chunks;
        try {
            for (std::size_t k = begin; k < end; ++k)
                accumulate_sample(net, target_net, items[k], gamma, s, partial.data() + c * n_params);
        } catch (...) {
#pragma omp atomic write
            failed = true;
        }
    }
    if (failed) throw ShapeError("invalid transition in minibatch");

    std::vector<double> grad(partial.begin(), partial.begin() + static_cast<std::ptrdiff_t>(n_params));
    for (std::size_t c = 1; c < chunks; ++c) {
        const double* p = partial.data() + c * n_params;
        for (std::size_t k = 0; k < n_params; ++k) grad[k] += p[k];
    }
    return finish(net, std::move(grad), n);
}

QNetwork apply_gradient(QNetwork net, const Gradient& g, double learning_rate) {
    auto params = net.parameters();
    if (g.values.size() != params.size())
        throw ShapeError("gradient length " + std::to_string(g.values.size()) +
                         " does not match parameter length " + std::to_string(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= learning_rate * g.values[k];
    return net;
}

Gradient merge_gradients(std::span<const Gradient> gs) {
    if (gs.empty()) throw DomainError("merge_gradients needs at least one gradient");
    Gradient out;
    out.values.assign(gs.front().values.size(), 0.0);
    out.source_agent = gs.front().source_agent;
    out.round_index = gs.front().round_index;
    for (const auto& g : gs) {
        if (g.values.size() != out.values.size()) throw ShapeError("gradients differ in length");
        for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += g.values[k];
        out.round_index = std::max(out.round_index, g.round_index);
        if (g.source_agent != out.source_agent) out.source_agent = -1;
    }
    const double n = static_cast<double>(gs.size());
    for (auto& v : out.values) v /= n;
    return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : storage_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
    storage_[head_] = t;
    head_ = (head_ + 1) % storage_.size();
    size_ = std::min(size_ + 1, storage_.size());
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw LookupError("replay index out of range");
    const std::size_t oldest = (head_ + storage_.size() - size_) % storage_.size();
    return storage_[(oldest + i) % storage_.size()];
}

Minibatch ReplayBuffer::sample(Rng& rng) const {
    if (size_ < kMinibatchSize)
        throw NotReady("replay buffer holds " + std::to_string(size_) + " transitions, need " +
                       std::to_string(kMinibatchSize));
    std::vector<Transition> items;
    items.reserve(kMinibatchSize);
    for (std::size_t k = 0; k < kMinibatchSize; ++k) items.push_back(at(rng.index(size_)));
    return Minibatch(std::move(items));
}

} // namespace fedtraffic
