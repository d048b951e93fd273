#pragma once

#include <cstdint>
#include <random>

namespace fedtraffic {

// Seeded generator with library-independent conversions, so that draw counts
// and values are identical on every standard library. Every call to
// uniform01() or index() consumes exactly one engine draw.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n). Multiply-shift mapping; n must be > 0.
    std::uint64_t index(std::uint64_t n) {
        const unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * n;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer; derives independent stream seeds from a run seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace fedtraffic
