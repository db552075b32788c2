#include "comet/rng.hpp"

namespace comet {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RngStream RngStream::split(std::string_view name) const {
    return RngStream(splitmix64(seed_ ^ fnv1a64(name)));
}

RngStream RngStream::split(std::uint64_t index) const {
    return RngStream(splitmix64(seed_ + 0x632be59bd9b4e019ULL * (index + 1)));
}

double RngStream::uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double RngStream::normal(double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(engine_);
}

std::size_t RngStream::index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

bool RngStream::bernoulli(double p) {
    return uniform() < p;
}

}  // namespace comet
