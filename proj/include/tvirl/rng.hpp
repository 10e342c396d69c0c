#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tvirl {

/// SplitMix64 finalizer; used to derive independent substream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for a named substream keyed by (seed, name, index).
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

/**
 * Deterministic generator with platform-independent draws.
 *
 * Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
 * converts raw words to doubles and normals explicitly, because the standard
 * distributions are implementation-defined.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    /// Index k in [0, count) drawn with probability prob(k).
    template <class Getter>
    long categorical(long count, Getter&& prob) {
        const double u = uniform();
        double acc = 0.0;
        long last_positive = 0;
        for (long k = 0; k < count; ++k) {
            const double p = prob(k);
            if (p > 0.0) last_positive = k;
            acc += p;
            if (u < acc) return k;
        }
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace tvirl
