#include "peftlab/penalty.hpp"

#include "peftlab/errors.hpp"

namespace peftlab {

const char* penalty_kind_name(PenaltyKind kind) {
    switch (kind) {
        case PenaltyKind::none: return "none";
        case PenaltyKind::l2sp: return "l2sp";
        case PenaltyKind::ewc: return "ewc";
        case PenaltyKind::kfac: return "kfac";
    }
    return "?";
}

PenaltyKind penalty_kind_from_name(const std::string& name) {
    if (name == "none") return PenaltyKind::none;
    if (name == "l2sp") return PenaltyKind::l2sp;
    if (name == "ewc") return PenaltyKind::ewc;
    if (name == "kfac") return PenaltyKind::kfac;
    throw ConfigError("unknown penalty kind '" + name + "'");
}

FisherKind required_fisher_kind(PenaltyKind kind) {
    switch (kind) {
        case PenaltyKind::l2sp: return FisherKind::identity;
        case PenaltyKind::ewc: return FisherKind::diagonal;
        case PenaltyKind::kfac: return FisherKind::kronecker;
        case PenaltyKind::none: break;
    }
    throw ConfigError("penalty kind 'none' carries no fisher estimate");
}

void validate_penalty(const PenaltyConfig& config, const FisherEstimate* fisher,
                      const Network& net) {
    if (config.kind == PenaltyKind::none) return;
    if (config.lambda < 0.0) throw ConfigError("penalty lambda must be >= 0");
    if (fisher == nullptr) {
        throw ConfigError(std::string("penalty kind '") + penalty_kind_name(config.kind) +
                          "' requires a fisher estimate");
    }
    if (fisher->kind() != required_fisher_kind(config.kind)) {
        throw ConfigError(std::string("penalty kind '") + penalty_kind_name(config.kind) +
                          "' needs a " + fisher_kind_name(required_fisher_kind(config.kind)) +
                          " estimate, got " + fisher_kind_name(fisher->kind()));
    }
    for (const auto& name : config.layers) {
        if (!net.has_layer(name)) {
            throw ConfigError("penalty: network has no layer '" + name + "'");
        }
        if (net.layer(name).is_head()) {
            throw ConfigError("penalty: head layer '" + name + "' is never regularized");
        }
        if (!fisher->has_layer(name)) {
            throw ConfigError("penalty: fisher estimate has no layer '" + name + "'");
        }
    }
}

namespace {

// Delta-weight node for one layer, either reusing the forward pass's LoRA
// leaves or building fresh parameter leaves.
NodeId delta_node(Tape& tape, Network& net, std::size_t layer_idx, bool reuse_forward) {
    LinearLayer& layer = net.layers()[layer_idx];
    if (reuse_forward) {
        const auto& nodes = net.forward_nodes();
        if (nodes.size() != net.layers().size()) {
            throw ContractError("penalty: no forward pass recorded on this tape");
        }
        const LayerNodes& ln = nodes[layer_idx];
        if (ln.delta != kNoNode) return ln.delta;
        if (ln.weight == kNoNode) {
            throw ContractError("penalty: no forward pass recorded for layer " + layer.name());
        }
        if (!layer.anchor().has_value()) {
            throw ContractError("penalty: layer " + layer.name() +
                                " has neither adapter nor anchor; delta weight is undefined");
        }
        return tape.sub(ln.weight, tape.leaf(*layer.anchor(), false));
    }
    if (layer.has_adapter()) {
        const LoraAdapter& ad = layer.adapter();
        const NodeId a = tape.leaf(ad.a, true);
        const NodeId b = tape.leaf(ad.b, true);
        return tape.scale(tape.matmul(a, tape.transpose(b)), ad.gamma);
    }
    if (!layer.anchor().has_value()) {
        throw ContractError("penalty: layer " + layer.name() +
                            " has neither adapter nor anchor; delta weight is undefined");
    }
    const NodeId w = tape.leaf(layer.weight(), true);
    return tape.sub(w, tape.leaf(*layer.anchor(), false));
}

void check_dims(const LayerFisher& lf, const LinearLayer& layer) {
    if (lf.out_dim != layer.out_dim() || lf.in_dim != layer.in_dim()) {
        throw ShapeError("penalty: fisher dims " + std::to_string(lf.out_dim) + "x" +
                         std::to_string(lf.in_dim) + " vs layer " + layer.weight().shape_str());
    }
}

}  // namespace

NodeId penalty_node(Tape& tape, Network& net, const FisherEstimate* fisher,
                    const PenaltyConfig& config, bool reuse_forward) {
    validate_penalty(config, fisher, net);
    if (config.kind == PenaltyKind::none) {
        return tape.leaf(Matrix(1, 1, {0.0}), false);
    }

    NodeId total = kNoNode;
    // Iterate in network order so the accumulation order is independent of
    // how the config lists the layers.
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        const LinearLayer& layer = net.layers()[l];
        bool selected = false;
        for (const auto& name : config.layers) selected |= (name == layer.name());
        if (!selected) continue;

        const LayerFisher& lf = fisher->layer(layer.name());
        check_dims(lf, layer);
        const NodeId delta = delta_node(tape, net, l, reuse_forward);

        NodeId term = kNoNode;
        switch (config.kind) {
            case PenaltyKind::l2sp:
                term = tape.sum(tape.mul(delta, delta));
                break;
            case PenaltyKind::ewc: {
                const NodeId f = tape.leaf(lf.diag, false);
                term = tape.sum(tape.mul(f, tape.mul(delta, delta)));
                break;
            }
            case PenaltyKind::kfac: {
                const NodeId g = tape.leaf(lf.g_factor, false);
                const NodeId a = tape.leaf(lf.a_factor, false);
                const NodeId gda = tape.matmul(tape.matmul(g, delta), a);
                term = tape.sum(tape.mul(delta, gda));
                break;
            }
            case PenaltyKind::none:
                break;
        }
        total = (total == kNoNode) ? term : tape.add(total, term);
    }
    if (total == kNoNode) {
        return tape.leaf(Matrix(1, 1, {0.0}), false);
    }
    return tape.scale(total, config.lambda);
}

double penalty_value(Network& net, const FisherEstimate* fisher, const PenaltyConfig& config) {
    Tape tape;
    return tape.value(penalty_node(tape, net, fisher, config, false))(0, 0);
}

std::vector<std::pair<std::string, PenaltyGrads>> penalty_gradients(
    Network& net, const FisherEstimate* fisher, const PenaltyConfig& config) {
    validate_penalty(config, fisher, net);
    std::vector<std::pair<std::string, PenaltyGrads>> out;
    if (config.kind == PenaltyKind::none) return out;

    // One tape per layer keeps the leaf bookkeeping simple; penalties are
    // layerwise sums so nothing couples across layers.
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        LinearLayer& layer = net.layers()[l];
        bool selected = false;
        for (const auto& name : config.layers) selected |= (name == layer.name());
        if (!selected) continue;

        Tape tape;
        PenaltyConfig single = config;
        single.layers = {layer.name()};
        NodeId delta;
        PenaltyGrads grads;
        NodeId a_leaf = kNoNode, b_leaf = kNoNode, w_leaf = kNoNode;
        if (layer.has_adapter()) {
            const LoraAdapter& ad = layer.adapter();
            a_leaf = tape.leaf(ad.a, true);
            b_leaf = tape.leaf(ad.b, true);
            delta = tape.scale(tape.matmul(a_leaf, tape.transpose(b_leaf)), ad.gamma);
            grads.lora = true;
        } else {
            if (!layer.anchor().has_value()) {
                throw ContractError("penalty: layer " + layer.name() +
                                    " has neither adapter nor anchor");
            }
            w_leaf = tape.leaf(layer.weight(), true);
            delta = tape.sub(w_leaf, tape.leaf(*layer.anchor(), false));
        }

        const LayerFisher& lf = fisher->layer(layer.name());
        check_dims(lf, layer);
        NodeId term = kNoNode;
        switch (config.kind) {
            case PenaltyKind::l2sp:
                term = tape.sum(tape.mul(delta, delta));
                break;
            case PenaltyKind::ewc:
                term = tape.sum(tape.mul(tape.leaf(lf.diag, false), tape.mul(delta, delta)));
                break;
            case PenaltyKind::kfac: {
                const NodeId gda = tape.matmul(
                    tape.matmul(tape.leaf(lf.g_factor, false), delta),
                    tape.leaf(lf.a_factor, false));
                term = tape.sum(tape.mul(delta, gda));
                break;
            }
            case PenaltyKind::none:
                break;
        }
        const NodeId scaled = tape.scale(term, config.lambda);
        tape.backward(scaled);
        if (grads.lora) {
            grads.a = tape.grad(a_leaf);
            grads.b = tape.grad(b_leaf);
        } else {
            grads.w = tape.grad(w_leaf);
        }
        out.emplace_back(layer.name(), std::move(grads));
    }
    return out;
}

NodeId total_loss_node(Tape& tape, Network& net, const Batch& batch,
                       const FisherEstimate* fisher, const PenaltyConfig& config) {
    const NodeId task = net.loss_node(tape, batch);
    const NodeId reg = penalty_node(tape, net, fisher, config, true);
    return tape.add(task, reg);
}

double total_loss(Network& net, const Batch& batch, const FisherEstimate* fisher,
                  const PenaltyConfig& config) {
    Tape tape;
    return tape.value(total_loss_node(tape, net, batch, fisher, config))(0, 0);
}

}  // namespace peftlab
