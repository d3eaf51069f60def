#include "bvmp/params.hpp"

#include "bvmp/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace bvmp {

double q_upper(int dim) { return dim <= 1 ? 2.0 : static_cast<double>(dim) / (dim - 1); }

void validate(const ProblemParams& params) {
    if (params.dim < 1 || params.dim > 2)
        throw Error("invalid_argument", fmt::format("dimension must be 1 or 2, got {}", params.dim));
    const double qmax = q_upper(params.dim);
    if (!(params.q > 1.0 && params.q < qmax))
        throw Error("invalid_argument", fmt::format("q must satisfy 1 < q < N/(N-1) = {} (got q = {})", qmax, params.q));
    if (!(params.p_bar > 1.0 && params.p_bar < params.q))
        throw Error("invalid_argument",
                    fmt::format("p_bar must satisfy 1 < p_bar < q (got p_bar = {}, q = {})", params.p_bar, params.q));
    if (!(params.p > 1.0 && params.p <= params.p_bar))
        throw Error("invalid_argument",
                    fmt::format("p must satisfy 1 < p <= p_bar (got p = {}, p_bar = {})", params.p, params.p_bar));
    if (!(params.beta >= 0.0) || !std::isfinite(params.beta))
        throw Error("invalid_argument", fmt::format("beta must be finite and >= 0 (got {})", params.beta));
}

}  // namespace bvmp
