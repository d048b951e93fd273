#pragma once

#include "fedtraffic/qnetwork.hpp"
#include "fedtraffic/rng.hpp"
#include "fedtraffic/traffic.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedtraffic {

inline constexpr std::size_t kMinibatchSize = 256;
// One minibatch gradient per agent every 256 simulation steps (25.6 s).
inline constexpr std::int64_t kGradientPeriodSteps = 256;

struct Transition {
    Observation obs{};
    std::size_t action_index = 0;
    double reward = 0.0;
    Observation next_obs{};
    bool terminal = false;

    friend bool operator==(const Transition&, const Transition&) = default;
};

class Minibatch {
public:
    // Production batches hold exactly kMinibatchSize transitions.
    explicit Minibatch(std::vector<Transition> items);
    // Any non-empty size; only gradient tests should build these.
    static Minibatch for_testing(std::vector<Transition> items);

    std::span<const Transition> items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    bool test_only() const { return test_only_; }

private:
    Minibatch() = default;
    std::vector<Transition> items_;
    bool test_only_ = false;
};

struct Gradient {
    std::vector<double> values;
    int source_agent = -1;
    std::int64_t round_index = 0;

    friend bool operator==(const Gradient&, const Gradient&) = default;
};

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    double decay_epochs = 100.0;

    double at(int epoch) const;
};

struct LearnerConfig {
    std::vector<double> action_set{-3.0, -1.5, 0.0, 1.5, 3.0};
    std::vector<std::size_t> hidden_sizes{16, 16};
    double learning_rate = 5e-3;
    double gamma = 0.99;
    EpsilonSchedule epsilon{};
    std::size_t replay_capacity = 20000;
    int target_sync_period = 10;

    std::vector<std::size_t> layer_sizes() const;
};

void validate(const LearnerConfig& cfg);

// Two engine draws per call regardless of epsilon: a uniform for the explore
// decision, then a uniform action index (used only when exploring).
std::size_t act(const QNetwork& net, const Observation& obs, double epsilon, Rng& rng);

// Lowest index among maximal values.
std::size_t argmax(std::span<const double> values);

double td_loss(const QNetwork& net, const QNetwork& target_net, const Minibatch& batch,
               double gamma);

// Analytic gradient of td_loss w.r.t. net's parameters, target_net held fixed.
// The batch is split into a fixed number of contiguous chunks that are
// accumulated in parallel and reduced in chunk order, so the result does not
// depend on the thread count.
Gradient compute_gradient(const QNetwork& net, const QNetwork& target_net,
                          const Minibatch& batch, double gamma);

// Serial reference: one accumulator, samples in batch order.
Gradient compute_gradient_serial(const QNetwork& net, const QNetwork& target_net,
                                 const Minibatch& batch, double gamma);

QNetwork apply_gradient(QNetwork net, const Gradient& g, double learning_rate);

// Element-wise arithmetic mean (summed in input order); round_index is the max
// of the inputs; source_agent is kept only if every input shares it.
Gradient merge_gradients(std::span<const Gradient> gs);

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(const Transition& t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return storage_.size(); }
    // Logical index 0 is the oldest retained transition.
    const Transition& at(std::size_t i) const;

    // kMinibatchSize uniform draws with replacement, one engine draw each.
    Minibatch sample(Rng& rng) const;

private:
    std::vector<Transition> storage_;
    std::size_t head_ = 0;
    std::size_t size_ = 0;
};

} // namespace fedtraffic
