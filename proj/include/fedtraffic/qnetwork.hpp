#pragma once

#include "fedtraffic/rng.hpp"
#include "fedtraffic/traffic.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedtraffic {

// Fully connected value network. Hidden layers use tanh, the output layer is
// affine. Parameters are stored flat, layer by layer, each layer as its
// row-major weight matrix (out x in) followed by its bias vector.
class QNetwork {
public:
    QNetwork() = default;
    explicit QNetwork(std::vector<std::size_t> layer_sizes);
    QNetwork(std::vector<std::size_t> layer_sizes, std::vector<double> parameters);

    static std::size_t parameter_count(std::span<const std::size_t> layer_sizes);

    // Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
    static QNetwork glorot(std::vector<std::size_t> layer_sizes, Rng& rng);

    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    std::size_t layer_count() const { return sizes_.size() - 1; }
    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }

    std::span<const double> parameters() const { return params_; }
    std::span<double> parameters() { return params_; }

    // Offsets into parameters() of the weight block and bias block of `layer`.
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
    }

    std::vector<double> forward(std::span<const double> input) const;

    // Forward pass writing into caller-owned scratch. `activations` receives
    // every layer output concatenated (hidden layers post-tanh, then output).
    void forward_into(std::span<const double> input, std::vector<double>& activations) const;

    bool same_layout(const QNetwork& other) const { return sizes_ == other.sizes_; }

    friend bool operator==(const QNetwork&, const QNetwork&) = default;

private:
    void build_offsets();

    std::vector<std::size_t> sizes_;
    std::vector<double> params_;
    std::vector<std::size_t> offsets_;
};

// Little-endian checkpoint layout:
//   bytes 0..3   magic "FTQN"
//   u32          format version (1)
//   u32          number of layer sizes S
//   u32 * S      layer sizes
//   u64          parameter count P
//   f64 * P      parameters (IEEE-754 binary64)
std::vector<std::uint8_t> serialize(const QNetwork& net);
QNetwork deserialize(std::span<const std::uint8_t> bytes);

} // namespace fedtraffic
