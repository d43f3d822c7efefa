#pragma once

#include <functional>
#include <span>
#include <string>

#include "peftlab/matrix.hpp"
#include "peftlab/model.hpp"

namespace peftlab::oracle {

// Brute-force references for cross-checking the main path. Everything here is
// written with its own plain loops over std::vector<double>: the module reads
// Matrix/Network data but calls none of the tape or layer arithmetic, so
// agreement between the two paths is meaningful. Size guards hard-fail;
// oracles never approximate.

// Literal Kronecker product; result limited to 1024x1024.
Matrix dense_kron(const Matrix& a, const Matrix& g);

// Mean over samples of vec(g a^T) vec(g a^T)^T for the named layer, with
// column-major vec, using an independent forward/backprop over per-sample
// cross-entropy. Limited to layers with d_o * d_i <= 256.
Matrix exact_fisher_block(const Network& net, const std::string& layer_name,
                          const Batch& samples);

// Central differences (f(x+eps) - f(x-eps)) / 2eps per coordinate, evaluated
// by perturbing params in place.
std::vector<double> finite_diff_grad(const std::function<double()>& f, std::span<double> params,
                                     double eps);

}  // namespace peftlab::oracle
