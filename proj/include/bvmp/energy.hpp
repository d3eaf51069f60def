#pragma once

#include "bvmp/fields.hpp"
#include "bvmp/kernels.hpp"
#include "bvmp/nonlinearity.hpp"
#include "bvmp/params.hpp"
#include "bvmp/quadrature.hpp"

#include <vector>

namespace bvmp {

struct AssemblyOptions {
    Quadrature quad{};
    Exec exec = Exec::parallel;
    double gradtol = 0.0;  // elements with |grad u| <= gradtol get a zero flux
};

struct EnergyReport {
    double Qp = 0.0;    // (1/p) int |grad u|^p
    double Fint = 0.0;  // int F_beta(u)
    double J = 0.0;     // Qp - Fint
    double I = 0.0;     // J + (p-1)/p |Omega|
};

double eval_Qp(const FeField& u, double p, const AssemblyOptions& opt = {});
double eval_F_integral(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt = {});
double eval_J(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt = {});
EnergyReport eval_I(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt = {});

/// Gradient norm in W^{1,p}_0: (int |grad u|^p)^{1/p}.
double w1p_norm(const FeField& u, double p, const AssemblyOptions& opt = {});

struct GradientResult {
    std::vector<double> nodal;        // one entry per node, boundary entries 0
    std::vector<double> flux_part;    // sum_T z_T . grad phi_i |T|, all nodes
    std::vector<double> load_part;    // int rho phi_i, all nodes
    int degenerate_elements = 0;      // elements with |grad u| <= gradtol
    std::vector<int> tie_nodes;       // interior nodes with u_i == beta exactly

    double max_abs() const;           // sup norm over interior nodes
    std::vector<double> dofs(const Mesh& mesh) const;
};

/// Nodal residual g_i = int |grad u|^{p-2} grad u . grad phi_i - int rho(u) phi_i.
GradientResult assemble_gradient(const FeField& u, const ProblemParams& params,
                                 SelectionRule rule = SelectionRule::pointwise, const AssemblyOptions& opt = {});

struct GeometryConstants {
    double C_geom = 0.0;
    double r = 0.0;
    double alpha = 0.0;
    double theta = 0.0;  // p_bar (N-1)/(N-p_bar)
    bool model = false;  // 1D run evaluated with the N = 2 formulas
};

GeometryConstants eval_mountain_geometry(const ProblemParams& params, double domain_measure);

/// Dimension used by every constant formula: N, or 2 for the 1D model.
int formula_dim(const ProblemParams& params);

/// Sobolev factor p(N-1)/(N-p).
double sobolev_theta(double p, int N);

/// Critical exponent Np/(N-p).
double sobolev_exponent(double p, int N);

struct SobolevReport {
    double lhs = 0.0;     // ||u||_{p*} (max norm for the 1D model)
    double rhs = 0.0;     // (theta/sqrt N) ||grad u||_p
    double p_star = 0.0;
    bool holds = false;
    bool model = false;
};

SobolevReport sobolev_check(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt = {});

/// (int |u|^r)^{1/r}.
double lr_norm(const FeField& u, double r, const AssemblyOptions& opt = {});
/// (int |u - v|^r)^{1/r} for fields on the same mesh.
double lr_distance(const FeField& u, const FeField& v, double r, const AssemblyOptions& opt = {});

}  // namespace bvmp
