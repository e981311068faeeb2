#ifndef SONOS_RNG_HPP
#define SONOS_RNG_HPP

#include <cstdint>
#include <random>

namespace sonos {

/// Seeded random stream. Every stochastic operation takes one of these
/// explicitly so a run is reproducible from its seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    std::uint64_t next() { return engine_(); }

    /// Derives an independent child seed, e.g. for a worker in a sweep.
    std::uint64_t split() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace sonos

#endif  // SONOS_RNG_HPP
