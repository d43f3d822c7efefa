#include "peftlab/tape.hpp"

#include <cmath>
#include <string>

#include "peftlab/errors.hpp"

namespace peftlab {

namespace {

// Raw kernels used only by the tape. ikj loop order keeps the inner loop
// contiguous for row-major data.
Matrix mm(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aik * b(k, j);
            }
        }
    }
    return c;
}

// a * b^T
Matrix mm_abt(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
            c(i, j) = s;
        }
    }
    return c;
}

// a^T * b
Matrix mm_atb(const Matrix& a, const Matrix& b) {
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, j) += aki * b(k, j);
            }
        }
    }
    return c;
}

Matrix transposed(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
    if (id >= nodes_.size()) throw ContractError("tape: node id out of range");
    return nodes_[id];
}

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    backward_done_ = false;
    return nodes_.size() - 1;
}

NodeId Tape::leaf(Matrix value, bool requires_grad) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId x, NodeId y) {
    const Node& a = node(x);
    const Node& b = node(y);
    if (a.value.cols() != b.value.rows()) {
        throw ShapeError("matmul: " + a.value.shape_str() + " x " + b.value.shape_str());
    }
    Node n;
    n.op = Op::matmul;
    n.in0 = x;
    n.in1 = y;
    n.value = mm(a.value, b.value);
    n.requires_grad = a.requires_grad || b.requires_grad;
    return push(std::move(n));
}

NodeId Tape::transpose(NodeId x) {
    const Node& a = node(x);
    Node n;
    n.op = Op::transpose;
    n.in0 = x;
    n.value = transposed(a.value);
    n.requires_grad = a.requires_grad;
    return push(std::move(n));
}

NodeId Tape::add(NodeId x, NodeId y) {
    const Node& a = node(x);
    const Node& b = node(y);
    if (!a.value.same_shape(b.value)) {
        throw ShapeError("add: " + a.value.shape_str() + " vs " + b.value.shape_str());
    }
    Node n;
    n.op = Op::add;
    n.in0 = x;
    n.in1 = y;
    n.value = a.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] += b.value.data()[i];
    n.requires_grad = a.requires_grad || b.requires_grad;
    return push(std::move(n));
}

NodeId Tape::sub(NodeId x, NodeId y) {
    const Node& a = node(x);
    const Node& b = node(y);
    if (!a.value.same_shape(b.value)) {
        throw ShapeError("sub: " + a.value.shape_str() + " vs " + b.value.shape_str());
    }
    Node n;
    n.op = Op::sub;
    n.in0 = x;
    n.in1 = y;
    n.value = a.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] -= b.value.data()[i];
    n.requires_grad = a.requires_grad || b.requires_grad;
    return push(std::move(n));
}

NodeId Tape::mul(NodeId x, NodeId y) {
    const Node& a = node(x);
    const Node& b = node(y);
    if (!a.value.same_shape(b.value)) {
        throw ShapeError("mul: " + a.value.shape_str() + " vs " + b.value.shape_str());
    }
    Node n;
    n.op = Op::mul;
    n.in0 = x;
    n.in1 = y;
    n.value = a.value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] *= b.value.data()[i];
    n.requires_grad = a.requires_grad || b.requires_grad;
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
    const Node& a = node(x);
    Node n;
    n.op = Op::relu;
    n.in0 = x;
    n.value = a.value;
    for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
    n.requires_grad = a.requires_grad;
    return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
    const Node& a = node(x);
    Node n;
    n.op = Op::tanh;
    n.in0 = x;
    n.value = a.value;
    for (double& v : n.value.data()) v = std::tanh(v);
    n.requires_grad = a.requires_grad;
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double c) {
    const Node& a = node(x);
    Node n;
    n.op = Op::scale;
    n.in0 = x;
    n.scalar = c;
    n.value = a.value;
    for (double& v : n.value.data()) v *= c;
    n.requires_grad = a.requires_grad;
    return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
    const Node& a = node(x);
    Node n;
    n.op = Op::sum;
    n.in0 = x;
    double s = 0.0;
    for (double v : a.value.data()) s += v;
    n.value = Matrix(1, 1, {s});
    n.requires_grad = a.requires_grad;
    return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Node& a = node(logits);
    const std::size_t batch = a.value.rows();
    const std::size_t classes = a.value.cols();
    if (labels.size() != batch) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(batch));
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                             " out of range for " + std::to_string(classes) + " classes");
        }
    }
    Node n;
    n.op = Op::softmax_xent;
    n.in0 = logits;
    n.labels = std::move(labels);
    n.aux = Matrix(batch, classes);
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        double row_max = a.value(i, 0);
        for (std::size_t c = 1; c < classes; ++c) row_max = std::max(row_max, a.value(i, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(a.value(i, c) - row_max);
        const double lse = row_max + std::log(denom);
        for (std::size_t c = 0; c < classes; ++c) {
            n.aux(i, c) = std::exp(a.value(i, c) - lse);
        }
        total += lse - a.value(i, static_cast<std::size_t>(n.labels[i]));
    }
    n.value = Matrix(1, 1, {total / static_cast<double>(batch)});
    n.requires_grad = a.requires_grad;
    return push(std::move(n));
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

bool Tape::requires_grad(NodeId id) const { return node(id).requires_grad; }

void Tape::accumulate(NodeId id, const Matrix& contribution) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
        n.grad = Matrix::zeros(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
        n.grad.data()[i] += contribution.data()[i];
    }
}

void Tape::propagate(NodeId id) {
    const Node& n = nodes_[id];
    const Matrix& g = n.grad;
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            if (nodes_[n.in0].requires_grad) accumulate(n.in0, mm_abt(g, nodes_[n.in1].value));
            if (nodes_[n.in1].requires_grad) accumulate(n.in1, mm_atb(nodes_[n.in0].value, g));
            break;
        }
        case Op::transpose:
            accumulate(n.in0, transposed(g));
            break;
        case Op::add:
            accumulate(n.in0, g);
            accumulate(n.in1, g);
            break;
        case Op::sub: {
            accumulate(n.in0, g);
            if (nodes_[n.in1].requires_grad) {
                Matrix neg = g;
                for (double& v : neg.data()) v = -v;
                accumulate(n.in1, neg);
            }
            break;
        }
        case Op::mul: {
            const Matrix& x = nodes_[n.in0].value;
            const Matrix& y = nodes_[n.in1].value;
            if (nodes_[n.in0].requires_grad) {
                Matrix gx = g;
                for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] *= y.data()[i];
                accumulate(n.in0, gx);
            }
            if (nodes_[n.in1].requires_grad) {
                Matrix gy = g;
                for (std::size_t i = 0; i < gy.size(); ++i) gy.data()[i] *= x.data()[i];
                accumulate(n.in1, gy);
            }
            break;
        }
        case Op::relu: {
            const Matrix& x = nodes_[n.in0].value;
            Matrix gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if (x.data()[i] <= 0.0) gx.data()[i] = 0.0;
            }
            accumulate(n.in0, gx);
            break;
        }
        case Op::tanh: {
            Matrix gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                const double t = n.value.data()[i];
                gx.data()[i] *= 1.0 - t * t;
            }
            accumulate(n.in0, gx);
            break;
        }
        case Op::scale: {
            Matrix gx = g;
            for (double& v : gx.data()) v *= n.scalar;
            accumulate(n.in0, gx);
            break;
        }
        case Op::sum: {
            const Matrix& x = nodes_[n.in0].value;
            accumulate(n.in0, Matrix::constant(x.rows(), x.cols(), g(0, 0)));
            break;
        }
        case Op::softmax_xent: {
            const double gs = g(0, 0) / static_cast<double>(n.aux.rows());
            Matrix gx = n.aux;
            for (std::size_t i = 0; i < gx.rows(); ++i) {
                gx(i, static_cast<std::size_t>(n.labels[i])) -= 1.0;
            }
            for (double& v : gx.data()) v *= gs;
            accumulate(n.in0, gx);
            break;
        }
    }
}

void Tape::backward(NodeId root) {
    const Node& r = node(root);
    if (r.value.rows() != 1 || r.value.cols() != 1) {
        throw ContractError("backward: root must be scalar (1x1), got " + r.value.shape_str());
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Matrix();
    }
    if (r.requires_grad) {
        accumulate(root, Matrix(1, 1, {1.0}));
        for (std::size_t i = root + 1; i-- > 0;) {
            if (nodes_[i].has_grad && nodes_[i].requires_grad) propagate(i);
        }
    }
    // Parameters outside the root's subgraph still report a (zero) gradient.
    for (Node& n : nodes_) {
        if (n.requires_grad && !n.has_grad) {
            n.grad = Matrix::zeros(n.value.rows(), n.value.cols());
            n.has_grad = true;
        }
    }
    backward_done_ = true;
}

const Matrix& Tape::grad(NodeId id) const {
    const Node& n = node(id);
    if (!backward_done_) throw ContractError("grad: backward() has not run");
    if (!n.has_grad) throw ContractError("grad: node does not require gradients");
    return n.grad;
}

void Tape::clear() {
    nodes_.clear();
    backward_done_ = false;
}

}  // namespace peftlab
