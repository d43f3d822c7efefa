#pragma once

#include <string>
#include <vector>

#include "peftlab/fisher.hpp"
#include "peftlab/model.hpp"
#include "peftlab/tape.hpp"

namespace peftlab {

enum class PenaltyKind { none, l2sp, ewc, kfac };

const char* penalty_kind_name(PenaltyKind kind);
PenaltyKind penalty_kind_from_name(const std::string& name);
FisherKind required_fisher_kind(PenaltyKind kind);

struct PenaltyConfig {
    PenaltyKind kind = PenaltyKind::none;
    double lambda = 0.0;
    std::vector<std::string> layers;
};

// Checks kind/variant pairing (l2sp<->identity, ewc<->diagonal,
// kfac<->kronecker), layer membership and head exclusion. fisher may be null
// only for kind none.
void validate_penalty(const PenaltyConfig& config, const FisherEstimate* fisher,
                      const Network& net);

// Appends the penalty subgraph to the tape and returns its scalar node:
//   l2sp: lambda * sum_l ||dW_l||_F^2
//   ewc:  lambda * sum_l <F_l, dW_l o dW_l>
//   kfac: lambda * sum_l <dW_l, G_l dW_l A_l>   (column-major vec identity)
// When reuse_forward is true, dW reuses the LoRA leaves recorded by the last
// Network::forward on this tape, so task and penalty gradients accumulate on
// the same parameters. Layers without an adapter fall back to W - anchor
// (full fine-tuning mode).
NodeId penalty_node(Tape& tape, Network& net, const FisherEstimate* fisher,
                    const PenaltyConfig& config, bool reuse_forward);

double penalty_value(Network& net, const FisherEstimate* fisher, const PenaltyConfig& config);

struct PenaltyGrads {
    bool lora = false;
    Matrix a;  // wrt adapter A (lora) — empty otherwise
    Matrix b;  // wrt adapter B
    Matrix w;  // wrt the full weight (full fine-tuning mode)
};

std::vector<std::pair<std::string, PenaltyGrads>> penalty_gradients(Network& net,
                                                                    const FisherEstimate* fisher,
                                                                    const PenaltyConfig& config);

// task loss + penalty on one tape; a single backward yields the combined
// gradients.
NodeId total_loss_node(Tape& tape, Network& net, const Batch& batch,
                       const FisherEstimate* fisher, const PenaltyConfig& config);

double total_loss(Network& net, const Batch& batch, const FisherEstimate* fisher,
                  const PenaltyConfig& config);

}  // namespace peftlab
