#pragma once

#include "bvmp/fields.hpp"
#include "bvmp/nonlinearity.hpp"
#include "bvmp/params.hpp"
#include "bvmp/quadrature.hpp"

#include <vector>

namespace bvmp {

/// Element-loop execution policy. Both paths evaluate the same per-element
/// expressions and reduce in element order, so their results agree bit for bit.
enum class Exec { serial, parallel };

/// Sets the OpenMP thread count (0 keeps the runtime default).
void set_threads(int threads);
int max_threads();

namespace kernels {

/// Sum over elements of |grad u|^p |T|.
double grad_power_sum(const FeField& u, double p, Exec exec);

/// Sum over elements of |grad u| |T|.
double grad_norm_sum(const FeField& u, Exec exec);

/// Integral of F_beta(u).
double F_integral(const FeField& u, const ProblemParams& params, const Quadrature& quad, Exec exec);

/// Integral of |u|^r.
double abs_power_integral(const FeField& u, double r, const Quadrature& quad, Exec exec);

/// Measure of {u > level}.
double superlevel_measure(const FeField& u, double level, Exec exec);

/// out_i = sum_T z_T . grad phi_i |T| with z_T = |grad u|_T^{p-2} grad u_T, for all
/// nodes. Elements with |grad u|_T <= gradtol contribute nothing; their count is returned.
int flux_residual(const FeField& u, double p, double gradtol, Exec exec, std::vector<double>& out);

/// out_i = integral of rho(u) phi_i for all nodes.
void load_vector(const FeField& u, const ProblemParams& params, SelectionRule rule, const Quadrature& quad,
                 Exec exec, std::vector<double>& out);

}  // namespace kernels
}  // namespace bvmp
