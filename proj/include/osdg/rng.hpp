#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace osdg {

// Deterministic stream RNG built on the SplitMix64 scrambler: the state
// advances by a fixed odd constant and each output is a bijective mix of the
// state. Produces the same sequence for the same seed on every platform; all
// derived distributions (uniform, normal, index) are implemented here rather
// than via std::<distribution>, whose output is not portable across standard
// library implementations.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    // Uniform integer in [0, n) via the multiply-shift reduction.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool coin() { return (next_u64() & 1ULL) != 0; }

  private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Hash of (seed, stream_id) used to give independent substreams to split
// construction, initialization, shuffling, transfers, and search runs.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) {
    RngStream mix(seed ^ (0xD1B54A32D192ED03ULL * (stream_id + 1)));
    mix.next_u64();
    return mix.next_u64();
}

inline RngStream derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return RngStream(derive_seed(seed, stream_id));
}

// Fisher-Yates shuffle driven by an RngStream.
template <typename T>
void shuffle(std::vector<T>& items, RngStream& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace osdg
