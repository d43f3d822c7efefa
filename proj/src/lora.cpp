#include "peftlab/lora.hpp"

#include <algorithm>

#include "peftlab/errors.hpp"
#include "peftlab/model.hpp"
#include "peftlab/rng.hpp"

namespace peftlab {

void attach_lora(LinearLayer& layer, std::size_t rank, double gamma, std::uint64_t seed) {
    if (layer.has_adapter()) {
        throw ContractError("layer " + layer.name() + ": adapter already attached");
    }
    if (rank < 1) throw ContractError("lora rank must be >= 1");
    if (rank > std::min(layer.out_dim(), layer.in_dim())) {
        throw ContractError("lora rank " + std::to_string(rank) + " exceeds min dim of " +
                            layer.name() + " (" + layer.weight().shape_str() + ")");
    }
    if (gamma <= 0.0) throw ContractError("lora gamma must be positive");
    LoraAdapter adapter;
    adapter.a = seeded_gaussian(layer.out_dim(), rank, 0.0, 0.02, Rng::derive(seed, 0xaULL));
    adapter.b = Matrix::zeros(layer.in_dim(), rank);
    adapter.gamma = gamma;
    adapter.rank = rank;
    layer.adapter_ = std::move(adapter);
}

Matrix delta_weight(const LinearLayer& layer) {
    const LoraAdapter& ad = layer.adapter();
    Matrix delta(layer.out_dim(), layer.in_dim());
    for (std::size_t i = 0; i < delta.rows(); ++i) {
        for (std::size_t j = 0; j < delta.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < ad.rank; ++r) s += ad.a(i, r) * ad.b(j, r);
            delta(i, j) = ad.gamma * s;
        }
    }
    return delta;
}

void merge(LinearLayer& layer) {
    const Matrix delta = delta_weight(layer);  // throws if no adapter
    Matrix w = layer.weight();
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] += delta.data()[i];
    layer.weight_ = std::move(w);
    layer.adapter_.reset();
}

}  // namespace peftlab
