#pragma once

// Discrete BV calculus on the P1/P0 pair: u is continuous piecewise linear,
// fluxes are constant per element. For this pair the pairing (z, Du) and the
// Green formula hold exactly, so they double as assembly self-tests.

#include "bvmp/fields.hpp"
#include "bvmp/kernels.hpp"
#include "bvmp/nonlinearity.hpp"

#include <optional>
#include <vector>

namespace bvmp {

/// sum_T |grad u|_T |T|, the exact TV of the piecewise-linear function.
double total_variation(const FeField& u, Exec exec = Exec::parallel);

/// TV plus the boundary trace integral of |u|.
double bv_norm(const FeField& u, Exec exec = Exec::parallel);

/// z_T = |grad u|_T^{p-2} grad u_T, and the zero vector where grad u_T = 0.
FluxField extract_flux(const FeField& u, double p);

double flux_sup_norm(const FluxField& z);

struct PairingReport {
    double pairing_total = 0.0;   // sum_T wbar_T (z_T . grad u_T) |T|
    double tv_total = 0.0;
    double eps_act = 0.0;         // active set: |grad u|_T > eps_act
    std::vector<int> active;      // element indices
    std::vector<double> ratios;   // (z_T . grad u_T) / |grad u_T| on the active set
    double min_ratio = 0.0;
    double max_ratio = 0.0;
    double active_measure = 0.0;
};

/// Default eps_act is 1e-8 max_T |grad u|_T. The weight w enters through its
/// element means.
PairingReport pairing(const FluxField& z, const FeField& u, const FeField* w = nullptr,
                      std::optional<double> eps_act = std::nullopt);

struct DivergenceResidual {
    std::vector<double> nodal;   // r_i on all nodes; boundary entries are 0
    double max_abs = 0.0;        // over interior nodes
    double l2 = 0.0;
};

/// r_i = sum_T z_T . grad phi_i |T| - int rho phi_i at interior nodes.
DivergenceResidual weak_divergence_residual(const FluxField& z, const SelectionField& rho, const Mesh& mesh);

struct BoundarySignReport {
    std::vector<double> normal_trace;  // z_T . nu per boundary facet
    double integral = 0.0;             // int_{boundary} |u| + u [z, nu]
    double max_normal_trace = 0.0;
};

/// Uses the adjacent-element value z_T . nu as the normal trace.
BoundarySignReport boundary_sign_report(const FluxField& z, const FeField& u, const Mesh& mesh);

struct GreenDefect {
    double divergence = 0.0;   // int w div z: jumps of z . n across interior facets times w
    double pairing = 0.0;      // int z . grad w
    double boundary = 0.0;     // int_{boundary} (z . nu) w
    double defect = 0.0;       // |divergence + pairing - boundary|
};

/// Integration by parts for a P0 flux against a P1 weight, with every term
/// assembled independently (facets for the divergence and boundary, elements
/// for the pairing).
GreenDefect green_identity_check(const FluxField& z, const FeField& w, const Mesh& mesh);

}  // namespace bvmp
