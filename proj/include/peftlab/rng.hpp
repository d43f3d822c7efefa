#pragma once

#include <cstdint>
#include <vector>

#include "peftlab/matrix.hpp"

namespace peftlab {

// xoshiro256** seeded through splitmix64. Self-contained so that streams are
// bit-reproducible across compilers and standard libraries; std::mt19937 with
// std::normal_distribution is not portable that way.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    // Uniform in (0, 1].
    double next_uniform();
    // Standard normal via Box-Muller, one cached spare.
    double next_gaussian();
    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n);

    // Derives an independent stream seed; mixing is splitmix64-based so
    // (seed, tag) pairs do not collide for small tags.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Reproducible draw from N(mean, std^2); std == 0 yields the constant matrix.
Matrix seeded_gaussian(std::size_t rows, std::size_t cols, double mean, double std,
                       std::uint64_t seed);

}  // namespace peftlab
