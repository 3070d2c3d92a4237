#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace resiren {

// SplitMix64. Chosen over std::mt19937 because the whole artifact promises
// realization-level reproducibility across languages: the generator is small
// enough to restate in a few lines anywhere, and every random draw in the
// library flows through it.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits, the documented conversion.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t threshold = (0ull - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; only the cosine branch is used so one
    // call consumes exactly two uniforms (keeps draw counts easy to reason about).
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]: keeps log() finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Seeded Fisher-Yates permutation of {0..n-1}.
    std::vector<std::uint32_t> permutation(std::uint32_t n) {
        std::vector<std::uint32_t> p(n);
        for (std::uint32_t i = 0; i < n; ++i) p[i] = i;
        for (std::uint32_t i = n; i > 1; --i) {
            const auto j = static_cast<std::uint32_t>(uniform_int(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

private:
    std::uint64_t state_;
};

// FNV-1a over the stream name; used to derive independent sub-streams from one
// user-facing seed (grid/init/train/probe... all get their own stream).
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::uint64_t subseed(std::uint64_t seed, std::string_view stream) {
    return seed ^ fnv1a64(stream);
}

inline std::uint64_t subseed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
    // Mix the index through one SplitMix64 round so adjacent indices decorrelate.
    Rng r(seed ^ fnv1a64(stream) ^ (index * 0x9E3779B97F4A7C15ull));
    return r.next_u64();
}

} // namespace resiren
