#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "peftlab/lora.hpp"
#include "peftlab/matrix.hpp"
#include "peftlab/tape.hpp"

namespace peftlab {

enum class Activation { relu, tanh };

enum class HeadKind { classifier, char_lm };

struct HeadSpec {
    HeadKind kind = HeadKind::classifier;
    std::size_t output_dim = 0;   // classes, or vocab for char_lm
    std::size_t context_len = 1;  // char_lm only
};

// Trunk dims are the activation sizes, e.g. {16, 32, 32} builds two linear
// layers 32x16 and 32x32; the head layer is appended separately.
struct NetworkSpec {
    std::vector<std::size_t> dims;
    std::vector<Activation> activations;  // one per hidden transition
    HeadSpec head;

    void validate() const;
};

struct Batch {
    Matrix inputs;             // batch x d_in
    std::vector<int> targets;  // class or next-char index per row
};

// Biasless linear layer with optional LoRA adapter and per-sample capture of
// the layer input a_{l-1} and the pre-activation gradient g_l.
class LinearLayer {
public:
    LinearLayer(std::string name, Matrix weight, bool trainable);

    const std::string& name() const noexcept { return name_; }
    std::size_t out_dim() const noexcept { return weight_.rows(); }
    std::size_t in_dim() const noexcept { return weight_.cols(); }

    const Matrix& weight() const noexcept { return weight_; }
    void set_weight(Matrix w);

    bool trainable() const noexcept { return trainable_; }
    void set_trainable(bool t) noexcept { trainable_ = t; }
    bool is_head() const noexcept { return is_head_; }
    void set_head(bool h) noexcept { is_head_ = h; }
    bool capture() const noexcept { return capture_; }
    void set_capture(bool c) noexcept { capture_ = c; }

    bool has_adapter() const noexcept { return adapter_.has_value(); }
    const LoraAdapter& adapter() const;
    LoraAdapter& adapter();

    // Anchor weight for full fine-tuning mode (delta = W - anchor). Layers
    // with an adapter do not need one: W0 itself is the anchor.
    const std::optional<Matrix>& anchor() const noexcept { return anchor_; }
    void set_anchor(Matrix w) { anchor_ = std::move(w); }

    void clear_captured();
    void append_capture(Matrix a_col, Matrix g_col);
    const std::vector<Matrix>& captured_inputs() const noexcept { return captured_a_; }
    const std::vector<Matrix>& captured_pre_grads() const noexcept { return captured_g_; }

private:
    friend void attach_lora(LinearLayer&, std::size_t, double, std::uint64_t);
    friend void merge(LinearLayer&);

    std::string name_;
    Matrix weight_;
    bool trainable_ = true;
    bool is_head_ = false;
    bool capture_ = false;
    std::optional<LoraAdapter> adapter_;
    std::optional<Matrix> anchor_;
    std::vector<Matrix> captured_a_;
    std::vector<Matrix> captured_g_;
};

inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

// Tape node ids recorded by the most recent forward pass, one per layer.
struct LayerNodes {
    NodeId input = kNoNode;   // a_{l-1}, batch x d_i
    NodeId pre = kNoNode;     // s_l, batch x d_o
    NodeId weight = kNoNode;  // W leaf (W0 when adapter present)
    NodeId lora_a = kNoNode;
    NodeId lora_b = kNoNode;
    NodeId delta = kNoNode;  // gamma A B^T node when adapter present
};

class Network {
public:
    Network() = default;

    // Builds the trunk with He-style seeded init; the head is attached
    // separately.
    static Network make(NetworkSpec spec, std::uint64_t seed);

    const NetworkSpec& spec() const noexcept { return spec_; }
    std::size_t input_dim() const { return spec_.dims.front(); }

    std::vector<LinearLayer>& layers() noexcept { return layers_; }
    const std::vector<LinearLayer>& layers() const noexcept { return layers_; }
    bool has_layer(const std::string& name) const;
    LinearLayer& layer(const std::string& name);
    const LinearLayer& layer(const std::string& name) const;

    bool head_attached() const;
    LinearLayer& head_layer();
    const LinearLayer& head_layer() const;
    void attach_head(const HeadSpec& head, std::uint64_t seed);
    void detach_head();
    // Replaces the head with an existing layer (e.g. the pre-trained task-A
    // head when scoring retention on an adapted trunk).
    void set_head_layer(LinearLayer head);

    // Names of non-head layers, in forward order.
    std::vector<std::string> trunk_layer_names() const;

    NodeId forward(Tape& tape, const Matrix& inputs);
    const std::vector<LayerNodes>& forward_nodes() const noexcept { return forward_nodes_; }

    // forward + mean cross-entropy against batch targets.
    NodeId loss_node(Tape& tape, const Batch& batch);
    double task_loss(const Batch& batch);

    // Appends one (a, g) pair per batch row to every capture-enabled layer;
    // call after tape.backward() on a loss built by this network.
    void capture_after_backward(const Tape& tape);

private:
    NetworkSpec spec_;
    std::vector<LinearLayer> layers_;
    std::vector<LayerNodes> forward_nodes_;
};

double perplexity(double mean_nll);

}  // namespace peftlab
