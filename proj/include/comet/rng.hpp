#ifndef COMET_RNG_HPP
#define COMET_RNG_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace comet {

/**
 * Seeded random stream with deterministic child streams.
 *
 * Every random consumer (parameter init, dropout, episode sampling) draws from
 * a stream derived from one root seed by name or index, so adding a consumer
 * does not shift the draws of the others.
 */
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    RngStream split(std::string_view name) const;
    RngStream split(std::uint64_t index) const;

    std::mt19937_64& engine() { return engine_; }

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    double normal(double mean = 0.0, double sd = 1.0);
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    bool bernoulli(double p);

    template <typename T>
    void shuffle(std::vector<T>& values) {
        std::shuffle(values.begin(), values.end(), engine_);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// 64-bit FNV-1a, used for stream names and content hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace comet

#endif
