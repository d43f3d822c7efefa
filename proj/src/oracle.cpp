#include "peftlab/oracle.hpp"

#include <cmath>
#include <vector>

#include "peftlab/errors.hpp"

namespace peftlab::oracle {

namespace {

using Vec = std::vector<double>;

// Effective weight entries computed from scratch (base + gamma A B^T).
double weight_entry(const LinearLayer& layer, std::size_t i, std::size_t j) {
    double w = layer.weight()(i, j);
    if (layer.has_adapter()) {
        const LoraAdapter& ad = layer.adapter();
        double s = 0.0;
        for (std::size_t r = 0; r < ad.rank; ++r) s += ad.a(i, r) * ad.b(j, r);
        w += ad.gamma * s;
    }
    return w;
}

Vec apply_layer(const LinearLayer& layer, const Vec& a) {
    Vec s(layer.out_dim(), 0.0);
    for (std::size_t i = 0; i < layer.out_dim(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < layer.in_dim(); ++j) acc += weight_entry(layer, i, j) * a[j];
        s[i] = acc;
    }
    return s;
}

Vec softmax(const Vec& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - m);
    Vec p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - m) / denom;
    return p;
}

}  // namespace

Matrix dense_kron(const Matrix& a, const Matrix& g) {
    const std::size_t rows = a.rows() * g.rows();
    const std::size_t cols = a.cols() * g.cols();
    if (rows > 1024 || cols > 1024) {
        throw ContractError("dense_kron: result " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " exceeds 1024x1024 guard");
    }
    Matrix k(rows, cols);
    for (std::size_t ia = 0; ia < a.rows(); ++ia) {
        for (std::size_t ja = 0; ja < a.cols(); ++ja) {
            const double av = a(ia, ja);
            for (std::size_t ig = 0; ig < g.rows(); ++ig) {
                for (std::size_t jg = 0; jg < g.cols(); ++jg) {
                    k(ia * g.rows() + ig, ja * g.cols() + jg) = av * g(ig, jg);
                }
            }
        }
    }
    return k;
}

Matrix exact_fisher_block(const Network& net, const std::string& layer_name,
                          const Batch& samples) {
    const auto& layers = net.layers();
    std::size_t target = layers.size();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].name() == layer_name) target = l;
    }
    if (target == layers.size()) {
        throw ContractError("exact_fisher_block: no layer named '" + layer_name + "'");
    }
    const std::size_t d_o = layers[target].out_dim();
    const std::size_t d_i = layers[target].in_dim();
    const std::size_t dim = d_o * d_i;
    if (dim > 256) {
        throw ContractError("exact_fisher_block: layer has " + std::to_string(dim) +
                            " weights, guard is 256");
    }
    if (samples.inputs.rows() == 0) throw ContractError("exact_fisher_block: no samples");

    const auto& acts = net.spec().activations;
    Matrix block(dim, dim);
    for (std::size_t sample = 0; sample < samples.inputs.rows(); ++sample) {
        // Forward, keeping inputs and pre-activations per layer.
        std::vector<Vec> layer_inputs(layers.size());
        std::vector<Vec> pre_acts(layers.size());
        Vec a(samples.inputs.cols());
        for (std::size_t j = 0; j < a.size(); ++j) a[j] = samples.inputs(sample, j);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layer_inputs[l] = a;
            pre_acts[l] = apply_layer(layers[l], a);
            if (l + 1 < layers.size()) {
                const Activation act = acts[std::min(l, acts.size() - 1)];
                a = pre_acts[l];
                for (double& v : a) {
                    v = act == Activation::relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
                }
            }
        }

        // Backprop of this sample's negative log-likelihood.
        Vec g = softmax(pre_acts.back());
        g[static_cast<std::size_t>(samples.targets[sample])] -= 1.0;
        for (std::size_t l = layers.size() - 1; l > target; --l) {
            const LinearLayer& layer = layers[l];
            Vec da(layer.in_dim(), 0.0);
            for (std::size_t j = 0; j < layer.in_dim(); ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < layer.out_dim(); ++i) {
                    acc += weight_entry(layer, i, j) * g[i];
                }
                da[j] = acc;
            }
            const Activation act = acts[std::min(l - 1, acts.size() - 1)];
            const Vec& s_prev = pre_acts[l - 1];
            g.assign(layer.in_dim(), 0.0);
            for (std::size_t j = 0; j < layer.in_dim(); ++j) {
                if (act == Activation::relu) {
                    g[j] = s_prev[j] > 0.0 ? da[j] : 0.0;
                } else {
                    const double t = std::tanh(s_prev[j]);
                    g[j] = da[j] * (1.0 - t * t);
                }
            }
        }

        // vec(g a^T) with column-major vec, then the outer product.
        const Vec& a_t = layer_inputs[target];
        Vec v(dim);
        for (std::size_t j = 0; j < d_i; ++j) {
            for (std::size_t i = 0; i < d_o; ++i) v[j * d_o + i] = g[i] * a_t[j];
        }
        for (std::size_t r = 0; r < dim; ++r) {
            for (std::size_t c = 0; c < dim; ++c) block(r, c) += v[r] * v[c];
        }
    }

    const double inv_n = 1.0 / static_cast<double>(samples.inputs.rows());
    for (double& x : block.data()) x *= inv_n;
    return block;
}

std::vector<double> finite_diff_grad(const std::function<double()>& f, std::span<double> params,
                                     double eps) {
    if (eps <= 0.0) throw ContractError("finite_diff_grad: eps must be > 0");
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double original = params[i];
        params[i] = original + eps;
        const double f_plus = f();
        params[i] = original - eps;
        const double f_minus = f();
        params[i] = original;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw OracleError("finite_diff_grad: non-finite objective at coordinate " +
                              std::to_string(i));
        }
        grad[i] = (f_plus - f_minus) / (2.0 * eps);
    }
    return grad;
}

}  // namespace peftlab::oracle
