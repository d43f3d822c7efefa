#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peftlab/matrix.hpp"
#include "peftlab/model.hpp"

namespace peftlab {

enum class FisherKind { identity, diagonal, kronecker };

const char* fisher_kind_name(FisherKind kind);

// Per-layer curvature record. Which fields are populated depends on the
// estimate kind: diagonal fills `diag` (mean squared weight gradients),
// kronecker fills `a_factor` (d_i x d_i, mean a a^T) and `g_factor`
// (d_o x d_o, mean g g^T). Identity stores dims only.
struct LayerFisher {
    std::size_t out_dim = 0;
    std::size_t in_dim = 0;
    Matrix diag;
    Matrix a_factor;
    Matrix g_factor;
};

class FisherEstimate {
public:
    FisherEstimate() = default;
    FisherEstimate(FisherKind kind, std::uint64_t sample_count, double damping,
                   std::uint64_t seed)
        : kind_(kind), sample_count_(sample_count), damping_(damping), seed_(seed) {}

    FisherKind kind() const noexcept { return kind_; }
    std::uint64_t sample_count() const noexcept { return sample_count_; }
    double damping() const noexcept { return damping_; }
    std::uint64_t seed() const noexcept { return seed_; }

    void add_layer(std::string name, LayerFisher layer);
    bool has_layer(const std::string& name) const;
    const LayerFisher& layer(const std::string& name) const;
    const std::vector<std::pair<std::string, LayerFisher>>& layers() const noexcept {
        return layers_;
    }

    // Names/dims must match the network; head layers are rejected.
    void validate_against(const Network& net) const;

    std::size_t storage_scalars() const;

    bool operator==(const FisherEstimate& other) const = default;

private:
    FisherKind kind_ = FisherKind::identity;
    std::vector<std::pair<std::string, LayerFisher>> layers_;
    std::uint64_t sample_count_ = 0;
    double damping_ = 0.0;
    std::uint64_t seed_ = 0;
};

struct EstimateOptions {
    std::size_t n_samples = 1024;
    double damping = 1e-8;
    std::uint64_t seed = 0;
};

// Data-free: every named layer gets the identity variant (equal importance on
// all parameters), which is what the plain squared-shift penalty consumes.
FisherEstimate estimate_identity(const Network& net, const std::vector<std::string>& layer_names);

// Empirical Fisher diagonal: mean over sampled task-A examples of the
// elementwise square of the per-sample weight gradient g a^T, taken at the
// network's current (pre-trained) weights wrt the full effective weight.
FisherEstimate estimate_diagonal(Network& net, const Batch& pool,
                                 const std::vector<std::string>& layer_names,
                                 const EstimateOptions& options);

// Kronecker factors: A_l = mean a a^T over samples, G_l = mean g g^T, with
// damping * I added to both at finalize.
FisherEstimate estimate_kronecker(Network& net, const Batch& pool,
                                  const std::vector<std::string>& layer_names,
                                  const EstimateOptions& options);

}  // namespace peftlab
