#pragma once

#include <cstdint>

#include "peftlab/matrix.hpp"

namespace peftlab {

class LinearLayer;

// Low-rank adapter for a d_o x d_i layer. The effective weight is
// W0 + gamma * A * B^T with A (d_o x r) and B (d_i x r); gamma is stored as
// given, with no hidden division by the rank.
struct LoraAdapter {
    Matrix a;
    Matrix b;
    double gamma = 0.0;
    std::size_t rank = 0;
};

// A is drawn from N(0, 0.02^2), B starts at zero, so the delta weight is zero
// and the fine-tuning trajectory starts exactly at the pre-trained point. The
// base weight is frozen from here on; only A and B train.
void attach_lora(LinearLayer& layer, std::size_t rank, double gamma, std::uint64_t seed);

// gamma * A * B^T as a plain value (the differentiable version is built on
// the tape during Network::forward).
Matrix delta_weight(const LinearLayer& layer);

// Folds the adapter into the base weight and removes it; forward outputs are
// unchanged.
void merge(LinearLayer& layer);

}  // namespace peftlab
