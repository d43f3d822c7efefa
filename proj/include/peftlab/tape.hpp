#pragma once

#include <cstddef>
#include <vector>

#include "peftlab/matrix.hpp"

namespace peftlab {

using NodeId = std::size_t;

// Reverse-mode differentiation tape over matrix-valued nodes. Nodes are
// appended in construction order, so the sequence is topologically sorted by
// construction and backward() is a single reverse sweep. Single-threaded per
// tape; separate tapes are independent.
class Tape {
public:
    enum class Op {
        leaf,
        matmul,
        transpose,
        add,
        sub,
        mul,
        relu,
        tanh,
        scale,
        sum,
        softmax_xent,
    };

    NodeId leaf(Matrix value, bool requires_grad = false);

    NodeId matmul(NodeId x, NodeId y);
    NodeId transpose(NodeId x);
    NodeId add(NodeId x, NodeId y);
    NodeId sub(NodeId x, NodeId y);
    NodeId mul(NodeId x, NodeId y);  // elementwise (Hadamard)
    NodeId relu(NodeId x);           // subgradient 0 at 0
    NodeId tanh(NodeId x);
    NodeId scale(NodeId x, double c);
    NodeId sum(NodeId x);  // full reduction to 1x1

    // Mean negative log-likelihood over the batch, stabilized by row-max
    // subtraction. logits is batch x classes, labels holds one class index
    // per row. Gradient wrt logits is (softmax - onehot) / batch.
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

    const Matrix& value(NodeId id) const;
    bool requires_grad(NodeId id) const;

    // Root must be 1x1. Populates gradients for every node that requires
    // them; parameters outside the root's subgraph get zero gradients of
    // matching shape.
    void backward(NodeId root);
    const Matrix& grad(NodeId id) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Op op;
        NodeId in0 = 0;
        NodeId in1 = 0;
        Matrix value;
        Matrix grad;
        Matrix aux;               // softmax probabilities
        std::vector<int> labels;  // softmax targets
        double scalar = 0.0;
        bool requires_grad = false;
        bool has_grad = false;
    };

    const Node& node(NodeId id) const;
    NodeId push(Node n);
    void accumulate(NodeId id, const Matrix& contribution);
    void propagate(NodeId id);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace peftlab
