#include "fedtraffic/qnetwork.hpp"

#include "fedtraffic/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace fedtraffic {

std::size_t QNetwork::parameter_count(std::span<const std::size_t> layer_sizes) {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        total += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return total;
}

QNetwork::QNetwork(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw ShapeError("a network needs at least an input and output layer");
    for (auto s : sizes_)
        if (s == 0) throw ShapeError("layer sizes must be positive");
    params_.assign(parameter_count(sizes_), 0.0);
    build_offsets();
}

QNetwork::QNetwork(std::vector<std::size_t> layer_sizes, std::vector<double> parameters)
    : QNetwork(std::move(layer_sizes)) {
    if (parameters.size() != params_.size())
        throw ShapeError("parameter vector has length " + std::to_string(parameters.size()) +
                         ", layout needs " + std::to_string(params_.size()));
    params_ = std::move(parameters);
}

void QNetwork::build_offsets() {
    offsets_.clear();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(off);
        off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
    }
}

QNetwork QNetwork::glorot(std::vector<std::size_t> layer_sizes, Rng& rng) {
    QNetwork net(std::move(layer_sizes));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const double fan_in = static_cast<double>(net.sizes_[l]);
        const double fan_out = static_cast<double>(net.sizes_[l + 1]);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        const std::size_t w = net.weight_offset(l);
        for (std::size_t k = 0; k < net.sizes_[l] * net.sizes_[l + 1]; ++k)
            net.params_[w + k] = rng.uniform(-limit, limit);
    }
    return net;
}

void QNetwork::forward_into(std::span<const double> input, std::vector<double>& activations) const {
    if (input.size() != input_size())
        throw ShapeError("input has " + std::to_string(input.size()) + " components, expected " +
                         std::to_string(input_size()));
    std::size_t total = 0;
    for (std::size_t l = 1; l < sizes_.size(); ++l) total += sizes_[l];
    activations.resize(total);

    const double* x = input.data();
    double* out = activations.data();
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const std::size_t in = sizes_[l];
        const std::size_t n_out = sizes_[l + 1];
        const double* W = params_.data() + weight_offset(l);
        const double* b = params_.data() + bias_offset(l);
        const bool hidden = l + 1 < layer_count();
        for (std::size_t o = 0; o < n_out; ++o) {
            double acc = b[o];
            const double* row = W + o * in;
            for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
            out[o] = hidden ? std::tanh(acc) : acc;
        }
        x = out;
        out += n_out;
    }
}

std::vector<double> QNetwork::forward(std::span<const double> input) const {
    std::vector<double> acts;
    forward_into(input, acts);
    return {acts.end() - static_cast<std::ptrdiff_t>(output_size()), acts.end()};
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

constexpr std::uint8_t kMagic[4] = {'F', 'T', 'Q', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T take(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) throw DeserializationError("model payload truncated");
    T value;
    std::memcpy(&value, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

} // namespace

std::vector<std::uint8_t> serialize(const QNetwork& net) {
    std::vector<std::uint8_t> out;
    const auto params = net.parameters();
    out.reserve(24 + 4 * net.layer_sizes().size() + 8 * params.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
    for (auto s : net.layer_sizes()) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
    put<std::uint64_t>(out, params.size());
    const auto* p = reinterpret_cast<const std::uint8_t*>(params.data());
    out.insert(out.end(), p, p + params.size() * sizeof(double));
    return out;
}

QNetwork deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw DeserializationError("bad magic in model payload");
    std::size_t pos = 4;
    if (take<std::uint32_t>(bytes, pos) != kFormatVersion)
        throw DeserializationError("unsupported model payload version");
    const auto n_sizes = take<std::uint32_t>(bytes, pos);
    if (n_sizes < 2 || n_sizes > 64) throw DeserializationError("implausible layer count");
    std::vector<std::size_t> sizes;
    for (std::uint32_t i = 0; i < n_sizes; ++i) {
        const auto s = take<std::uint32_t>(bytes, pos);
        if (s == 0) throw DeserializationError("zero layer size");
        sizes.push_back(s);
    }
    const auto count = take<std::uint64_t>(bytes, pos);
    if (count != QNetwork::parameter_count(sizes))
        throw DeserializationError("parameter count does not match layer sizes");
    if (bytes.size() - pos != count * sizeof(double))
        throw DeserializationError("model payload length mismatch");
    std::vector<double> params(count);
    std::memcpy(params.data(), bytes.data() + pos, count * sizeof(double));
    return QNetwork(std::move(sizes), std::move(params));
}

} // namespace fedtraffic
