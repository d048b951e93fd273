#pragma once

#include "fedtraffic/learner.hpp"
#include "fedtraffic/qnetwork.hpp"
#include "fedtraffic/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fedtraffic::test {

struct FdCase {
    QNetwork net;
    QNetwork target;
    Minibatch batch;
    double gamma;
};

// Random net with at most ~200 parameters and a random test-sized batch.
inline FdCase random_fd_case(Rng& rng) {
    std::vector<std::size_t> sizes{6};
    const std::size_t hidden_layers = rng.index(3);
    for (std::size_t i = 0; i < hidden_layers; ++i) sizes.push_back(1 + rng.index(8));
    sizes.push_back(1 + rng.index(5));
    while (QNetwork::parameter_count(sizes) > 200) sizes[1] = std::max<std::size_t>(1, sizes[1] / 2);

    auto perturbed = [&](QNetwork n) {
        for (double& p : n.parameters()) p += rng.uniform(-0.3, 0.3);
        return n;
    };
    QNetwork net = perturbed(QNetwork::glorot(sizes, rng));
    QNetwork target = perturbed(QNetwork::glorot(sizes, rng));

    std::vector<Transition> items(4 + rng.index(29));
    for (auto& t : items) {
        for (double& x : t.obs) x = rng.uniform(-1, 1);
        for (double& x : t.next_obs) x = rng.uniform(-1, 1);
        t.action_index = rng.index(sizes.back());
        t.reward = rng.uniform(-2, 2);
        t.terminal = rng.uniform01() < 0.2;
    }
    return {std::move(net), std::move(target), Minibatch::for_testing(std::move(items)), rng.uniform(0.0, 0.99)};
}

// Central differences of td_loss in every coordinate.
inline std::vector<double> finite_difference_gradient(const FdCase& c, double h = 1e-5) {
    std::vector<double> g(c.net.parameters().size());
    QNetwork probe = c.net;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = probe.parameters()[i];
        probe.parameters()[i] = x + h;
        const double up = td_loss(probe, c.target, c.batch, c.gamma);
        probe.parameters()[i] = x - h;
        const double down = td_loss(probe, c.target, c.batch, c.gamma);
        probe.parameters()[i] = x;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

// |a - n| / max(|a|, |n|, floor); the floor keeps coordinates whose true value
// is below the finite-difference noise level from dominating.
inline double relative_error(double a, double n, double floor = 1e-5) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

} // namespace fedtraffic::test
