#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mlmkit {

/// Seeded pseudo-random source with platform-independent output.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal();

    /// Normal(0, stddev^2) resampled until it falls within +-bound*stddev.
    double truncated_normal(double stddev, double bound);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Derive an independent named sub-seed from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index = 0);

}  // namespace mlmkit
