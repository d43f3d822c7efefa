#include "peftlab/rng.hpp"

#include <cmath>
#include <numbers>

#include "peftlab/errors.hpp"

namespace peftlab {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_uniform() {
    // 53-bit mantissa, shifted into (0, 1] so log() below is always finite.
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Rng::next_below(std::uint64_t n) {
    if (n == 0) throw ContractError("next_below(0)");
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = ~0ULL - (~0ULL % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed ^ (0xa0761d6478bd642fULL * (tag + 1));
    return splitmix64(s);
}

Matrix seeded_gaussian(std::size_t rows, std::size_t cols, double mean, double std,
                       std::uint64_t seed) {
    if (std < 0.0) throw ContractError("seeded_gaussian: std must be >= 0");
    Matrix m(rows, cols);
    Rng rng(seed);
    for (double& x : m.data()) x = mean + std * rng.next_gaussian();
    return m;
}

}  // namespace peftlab
