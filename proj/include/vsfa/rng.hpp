#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "vsfa/util.hpp"

namespace vsfa {

// Fully specified generator so runs are reproducible across platforms;
// the standard shuffle/distribution algorithms are implementation-defined.
struct SplitMix64 {
    uint64_t state = 0;

    explicit SplitMix64(uint64_t seed = 0) : state(seed) {}

    uint64_t next() {
        state += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, n) via rejection sampling; n must be > 0.
    uint64_t below(uint64_t n) {
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    /// Uniform real in [0, 1).
    double unit_real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

inline uint64_t seed_from_string(std::string_view s) {
    std::string h = sha256_hex(s);
    uint64_t v = 0;
    for (int i = 0; i < 16; ++i) {
        char c = h[i];
        v = (v << 4) | static_cast<uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
    }
    return v;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace vsfa
