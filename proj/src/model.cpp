#include "peftlab/model.hpp"

#include <algorithm>
#include <cmath>

#include "peftlab/errors.hpp"
#include "peftlab/rng.hpp"

namespace peftlab {

void NetworkSpec::validate() const {
    if (dims.size() < 2) {
        throw ContractError("network spec needs at least input and one layer dim");
    }
    for (std::size_t d : dims) {
        if (d == 0) throw ShapeError("network spec: zero dim");
    }
    if (activations.size() != dims.size() - 1) {
        throw ContractError("network spec: need one activation per hidden transition, got " +
                            std::to_string(activations.size()) + " for " +
                            std::to_string(dims.size() - 1) + " layers");
    }
    if (head.output_dim == 0) throw ShapeError("network spec: head output dim must be >= 1");
    if (head.kind == HeadKind::char_lm && head.context_len < 1) {
        throw ContractError("network spec: char_lm context_len must be >= 1");
    }
}

LinearLayer::LinearLayer(std::string name, Matrix weight, bool trainable)
    : name_(std::move(name)), weight_(std::move(weight)), trainable_(trainable) {}

void LinearLayer::set_weight(Matrix w) {
    if (!w.same_shape(weight_)) {
        throw ShapeError("layer " + name_ + ": weight " + w.shape_str() +
                         " does not match " + weight_.shape_str());
    }
    weight_ = std::move(w);
}

const LoraAdapter& LinearLayer::adapter() const {
    if (!adapter_) throw ContractError("layer " + name_ + ": no adapter attached");
    return *adapter_;
}

LoraAdapter& LinearLayer::adapter() {
    if (!adapter_) throw ContractError("layer " + name_ + ": no adapter attached");
    return *adapter_;
}

void LinearLayer::clear_captured() {
    captured_a_.clear();
    captured_g_.clear();
}

void LinearLayer::append_capture(Matrix a_col, Matrix g_col) {
    captured_a_.push_back(std::move(a_col));
    captured_g_.push_back(std::move(g_col));
}

Network Network::make(NetworkSpec spec, std::uint64_t seed) {
    spec.validate();
    Network net;
    net.spec_ = std::move(spec);
    const auto& dims = net.spec_.dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t d_in = dims[l];
        const std::size_t d_out = dims[l + 1];
        const double std = std::sqrt(2.0 / static_cast<double>(d_in));
        Matrix w = seeded_gaussian(d_out, d_in, 0.0, std, Rng::derive(seed, l));
        net.layers_.emplace_back("fc" + std::to_string(l), std::move(w), true);
    }
    return net;
}

bool Network::has_layer(const std::string& name) const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [&](const LinearLayer& l) { return l.name() == name; });
}

LinearLayer& Network::layer(const std::string& name) {
    for (auto& l : layers_) {
        if (l.name() == name) return l;
    }
    throw ContractError("no layer named '" + name + "'");
}

const LinearLayer& Network::layer(const std::string& name) const {
    return const_cast<Network*>(this)->layer(name);
}

bool Network::head_attached() const { return !layers_.empty() && layers_.back().is_head(); }

LinearLayer& Network::head_layer() {
    if (!head_attached()) throw ContractError("no head attached");
    return layers_.back();
}

const LinearLayer& Network::head_layer() const {
    return const_cast<Network*>(this)->head_layer();
}

void Network::attach_head(const HeadSpec& head, std::uint64_t seed) {
    if (head_attached()) throw ContractError("head already attached");
    const std::size_t trunk_out = spec_.dims.back();
    if (head.output_dim == 0) throw ShapeError("head output dim must be >= 1");
    const double std = std::sqrt(1.0 / static_cast<double>(trunk_out));
    Matrix w = seeded_gaussian(head.output_dim, trunk_out, 0.0, std, Rng::derive(seed, 0x48eadULL));
    LinearLayer layer("head", std::move(w), true);
    layer.set_head(true);
    layers_.push_back(std::move(layer));
    spec_.head = head;
}

void Network::detach_head() {
    if (!head_attached()) throw ContractError("no head attached");
    layers_.pop_back();
}

void Network::set_head_layer(LinearLayer head) {
    if (head.in_dim() != spec_.dims.back()) {
        throw ShapeError("head expects input dim " + std::to_string(spec_.dims.back()) +
                         ", layer has " + std::to_string(head.in_dim()));
    }
    if (head_attached()) layers_.pop_back();
    head.set_head(true);
    layers_.push_back(std::move(head));
}

std::vector<std::string> Network::trunk_layer_names() const {
    std::vector<std::string> names;
    for (const auto& l : layers_) {
        if (!l.is_head()) names.push_back(l.name());
    }
    return names;
}

NodeId Network::forward(Tape& tape, const Matrix& inputs) {
    if (layers_.empty()) throw ContractError("forward: network has no layers");
    if (inputs.cols() != input_dim()) {
        throw ShapeError("forward: inputs " + inputs.shape_str() + " vs input dim " +
                         std::to_string(input_dim()));
    }
    const bool any_capture = std::any_of(layers_.begin(), layers_.end(),
                                         [](const LinearLayer& l) { return l.capture(); });
    forward_nodes_.assign(layers_.size(), LayerNodes{});

    // Marking the input leaf keeps gradients flowing to every pre-activation
    // even when all parameters are frozen, which capture relies on.
    NodeId act = tape.leaf(inputs, any_capture);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        LinearLayer& layer = layers_[l];
        LayerNodes& nodes = forward_nodes_[l];
        nodes.input = act;

        NodeId w_eff;
        if (layer.has_adapter()) {
            const LoraAdapter& ad = layer.adapter();
            nodes.weight = tape.leaf(layer.weight(), false);  // W0 frozen under LoRA
            nodes.lora_a = tape.leaf(ad.a, layer.trainable());
            nodes.lora_b = tape.leaf(ad.b, layer.trainable());
            const NodeId abt = tape.matmul(nodes.lora_a, tape.transpose(nodes.lora_b));
            nodes.delta = tape.scale(abt, ad.gamma);
            w_eff = tape.add(nodes.weight, nodes.delta);
        } else {
            nodes.weight = tape.leaf(layer.weight(), layer.trainable() || layer.capture());
            w_eff = nodes.weight;
        }

        nodes.pre = tape.matmul(act, tape.transpose(w_eff));
        if (l + 1 < layers_.size()) {
            const std::size_t hidden_idx = std::min(l, spec_.activations.size() - 1);
            switch (spec_.activations[hidden_idx]) {
                case Activation::relu:
                    act = tape.relu(nodes.pre);
                    break;
                case Activation::tanh:
                    act = tape.tanh(nodes.pre);
                    break;
            }
        } else {
            act = nodes.pre;  // logits
        }
    }
    return act;
}

NodeId Network::loss_node(Tape& tape, const Batch& batch) {
    if (batch.inputs.rows() == 0 || batch.targets.empty()) {
        throw ContractError("loss: empty batch");
    }
    const NodeId logits = forward(tape, batch.inputs);
    return tape.softmax_cross_entropy(logits, batch.targets);
}

double Network::task_loss(const Batch& batch) {
    Tape tape;
    return tape.value(loss_node(tape, batch))(0, 0);
}

void Network::capture_after_backward(const Tape& tape) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        LinearLayer& layer = layers_[l];
        if (!layer.capture()) continue;
        const LayerNodes& nodes = forward_nodes_[l];
        if (nodes.input == kNoNode || nodes.pre == kNoNode) {
            throw ContractError("capture: no forward pass recorded for layer " + layer.name());
        }
        const Matrix& a_batch = tape.value(nodes.input);
        const Matrix& g_batch = tape.grad(nodes.pre);
        for (std::size_t i = 0; i < a_batch.rows(); ++i) {
            layer.append_capture(a_batch.row_as_column(i), g_batch.row_as_column(i));
        }
    }
}

double perplexity(double mean_nll) { return std::exp(mean_nll); }

}  // namespace peftlab
