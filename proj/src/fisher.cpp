#include "peftlab/fisher.hpp"

#include <algorithm>
#include <numeric>

#include "peftlab/errors.hpp"
#include "peftlab/rng.hpp"

namespace peftlab {

const char* fisher_kind_name(FisherKind kind) {
    switch (kind) {
        case FisherKind::identity: return "identity";
        case FisherKind::diagonal: return "diagonal";
        case FisherKind::kronecker: return "kronecker";
    }
    return "?";
}

void FisherEstimate::add_layer(std::string name, LayerFisher layer) {
    if (has_layer(name)) throw ContractError("fisher: duplicate layer '" + name + "'");
    layers_.emplace_back(std::move(name), std::move(layer));
}

bool FisherEstimate::has_layer(const std::string& name) const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [&](const auto& p) { return p.first == name; });
}

const LayerFisher& FisherEstimate::layer(const std::string& name) const {
    for (const auto& [n, l] : layers_) {
        if (n == name) return l;
    }
    throw ContractError("fisher: no layer named '" + name + "'");
}

void FisherEstimate::validate_against(const Network& net) const {
    for (const auto& [name, lf] : layers_) {
        if (!net.has_layer(name)) {
            throw ContractError("fisher: network has no layer '" + name + "'");
        }
        const LinearLayer& layer = net.layer(name);
        if (layer.is_head()) {
            throw ContractError("fisher: head layer '" + name + "' cannot carry an estimate");
        }
        if (layer.out_dim() != lf.out_dim || layer.in_dim() != lf.in_dim) {
            throw ContractError("fisher: layer '" + name + "' dims " +
                                std::to_string(lf.out_dim) + "x" + std::to_string(lf.in_dim) +
                                " do not match network layer " + layer.weight().shape_str());
        }
    }
}

std::size_t FisherEstimate::storage_scalars() const {
    std::size_t total = 0;
    for (const auto& [name, lf] : layers_) {
        total += lf.diag.size() + lf.a_factor.size() + lf.g_factor.size();
    }
    return total;
}

namespace {

void check_layer_names(const Network& net, const std::vector<std::string>& layer_names) {
    if (layer_names.empty()) throw ContractError("fisher: empty layer set");
    for (const auto& name : layer_names) {
        if (!net.has_layer(name)) throw ContractError("fisher: no layer named '" + name + "'");
        if (net.layer(name).is_head()) {
            throw ContractError("fisher: head layer '" + name + "' is never estimated");
        }
    }
}

// One single-sample forward/backward per selected pool row, recording (a, g)
// through the capture machinery. Sample order is the shuffled index order, so
// a fixed seed reproduces the estimate bit-for-bit.
void run_capture_passes(Network& net, const Batch& pool,
                        const std::vector<std::string>& layer_names,
                        const EstimateOptions& options) {
    if (options.n_samples < 1) throw ContractError("fisher: n_samples must be >= 1");
    if (options.n_samples > pool.inputs.rows()) {
        throw DataError("fisher: requested " + std::to_string(options.n_samples) +
                        " samples from a pool of " + std::to_string(pool.inputs.rows()));
    }
    std::vector<std::size_t> order(pool.inputs.rows());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::derive(options.seed, 0xf15ULL));
    rng.shuffle(order);
    order.resize(options.n_samples);

    std::vector<bool> saved_capture;
    for (auto& layer : net.layers()) {
        saved_capture.push_back(layer.capture());
        layer.set_capture(false);
        layer.clear_captured();
    }
    for (const auto& name : layer_names) net.layer(name).set_capture(true);

    for (std::size_t idx : order) {
        Batch one;
        one.inputs = Matrix(1, pool.inputs.cols());
        for (std::size_t c = 0; c < pool.inputs.cols(); ++c) {
            one.inputs(0, c) = pool.inputs(idx, c);
        }
        one.targets = {pool.targets[idx]};
        Tape tape;
        const NodeId loss = net.loss_node(tape, one);
        tape.backward(loss);
        net.capture_after_backward(tape);
    }

    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        net.layers()[l].set_capture(saved_capture[l]);
    }
}

}  // namespace

FisherEstimate estimate_identity(const Network& net,
                                 const std::vector<std::string>& layer_names) {
    check_layer_names(net, layer_names);
    FisherEstimate estimate(FisherKind::identity, 1, 0.0, 0);
    for (const auto& name : layer_names) {
        const LinearLayer& layer = net.layer(name);
        LayerFisher lf;
        lf.out_dim = layer.out_dim();
        lf.in_dim = layer.in_dim();
        estimate.add_layer(name, std::move(lf));
    }
    return estimate;
}

FisherEstimate estimate_diagonal(Network& net, const Batch& pool,
                                 const std::vector<std::string>& layer_names,
                                 const EstimateOptions& options) {
    check_layer_names(net, layer_names);
    run_capture_passes(net, pool, layer_names, options);

    FisherEstimate estimate(FisherKind::diagonal, options.n_samples, options.damping,
                            options.seed);
    for (const auto& name : layer_names) {
        LinearLayer& layer = net.layer(name);
        LayerFisher lf;
        lf.out_dim = layer.out_dim();
        lf.in_dim = layer.in_dim();
        lf.diag = Matrix::zeros(layer.out_dim(), layer.in_dim());
        const auto& as = layer.captured_inputs();
        const auto& gs = layer.captured_pre_grads();
        for (std::size_t s = 0; s < as.size(); ++s) {
            for (std::size_t i = 0; i < lf.out_dim; ++i) {
                for (std::size_t j = 0; j < lf.in_dim; ++j) {
                    const double w_grad = gs[s](i, 0) * as[s](j, 0);
                    lf.diag(i, j) += w_grad * w_grad;
                }
            }
        }
        const double inv_n = 1.0 / static_cast<double>(as.size());
        for (double& x : lf.diag.data()) x *= inv_n;
        estimate.add_layer(name, std::move(lf));
        layer.clear_captured();
    }
    return estimate;
}

FisherEstimate estimate_kronecker(Network& net, const Batch& pool,
                                  const std::vector<std::string>& layer_names,
                                  const EstimateOptions& options) {
    check_layer_names(net, layer_names);
    run_capture_passes(net, pool, layer_names, options);

    FisherEstimate estimate(FisherKind::kronecker, options.n_samples, options.damping,
                            options.seed);
    for (const auto& name : layer_names) {
        LinearLayer& layer = net.layer(name);
        LayerFisher lf;
        lf.out_dim = layer.out_dim();
        lf.in_dim = layer.in_dim();
        lf.a_factor = Matrix::zeros(lf.in_dim, lf.in_dim);
        lf.g_factor = Matrix::zeros(lf.out_dim, lf.out_dim);
        const auto& as = layer.captured_inputs();
        const auto& gs = layer.captured_pre_grads();
        for (std::size_t s = 0; s < as.size(); ++s) {
            for (std::size_t i = 0; i < lf.in_dim; ++i) {
                const double ai = as[s](i, 0);
                for (std::size_t j = 0; j < lf.in_dim; ++j) {
                    lf.a_factor(i, j) += ai * as[s](j, 0);
                }
            }
            for (std::size_t i = 0; i < lf.out_dim; ++i) {
                const double gi = gs[s](i, 0);
                for (std::size_t j = 0; j < lf.out_dim; ++j) {
                    lf.g_factor(i, j) += gi * gs[s](j, 0);
                }
            }
        }
        const double inv_n = 1.0 / static_cast<double>(as.size());
        for (double& x : lf.a_factor.data()) x *= inv_n;
        for (double& x : lf.g_factor.data()) x *= inv_n;
        for (std::size_t i = 0; i < lf.in_dim; ++i) lf.a_factor(i, i) += options.damping;
        for (std::size_t i = 0; i < lf.out_dim; ++i) lf.g_factor(i, i) += options.damping;
        estimate.add_layer(name, std::move(lf));
        layer.clear_captured();
    }
    return estimate;
}

}  // namespace peftlab
