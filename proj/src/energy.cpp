#include "bvmp/energy.hpp"

#include "bvmp/error.hpp"

#include <algorithm>
#include <cmath>

namespace bvmp {

double eval_Qp(const FeField& u, double p, const AssemblyOptions& opt) {
    if (!(p > 1.0)) throw Error("invalid_argument", "Q_p needs p > 1");
    return kernels::grad_power_sum(u, p, opt.exec) / p;
}

double eval_F_integral(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt) {
    return kernels::F_integral(u, params, opt.quad, opt.exec);
}

double eval_J(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt) {
    return eval_Qp(u, params.p, opt) - eval_F_integral(u, params, opt);
}

EnergyReport eval_I(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt) {
    EnergyReport r;
    r.Qp = eval_Qp(u, params.p, opt);
    r.Fint = eval_F_integral(u, params, opt);
    r.J = r.Qp - r.Fint;
    r.I = r.J + (params.p - 1.0) / params.p * u.mesh().measure();
    return r;
}

double w1p_norm(const FeField& u, double p, const AssemblyOptions& opt) {
    return std::pow(kernels::grad_power_sum(u, p, opt.exec), 1.0 / p);
}

double GradientResult::max_abs() const {
    double m = 0.0;
    for (double v : nodal) m = std::max(m, std::abs(v));
    return m;
}

std::vector<double> GradientResult::dofs(const Mesh& mesh) const {
    std::vector<double> d(mesh.num_dofs());
    const auto interior = mesh.interior_nodes();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = nodal[interior[k]];
    return d;
}

GradientResult assemble_gradient(const FeField& u, const ProblemParams& params, SelectionRule rule,
                                 const AssemblyOptions& opt) {
    const Mesh& mesh = u.mesh();
    GradientResult g;
    g.degenerate_elements = kernels::flux_residual(u, params.p, opt.gradtol, opt.exec, g.flux_part);
    kernels::load_vector(u, params, rule, opt.quad, opt.exec, g.load_part);
    g.nodal.assign(mesh.num_nodes(), 0.0);
    for (int i : mesh.interior_nodes()) {
        g.nodal[i] = g.flux_part[i] - g.load_part[i];
        if (u[i] == params.beta) g.tie_nodes.push_back(i);
    }
    return g;
}

int formula_dim(const ProblemParams& params) { return params.model() ? 2 : params.dim; }

double sobolev_theta(double p, int N) { return p * (N - 1.0) / (N - p); }

double sobolev_exponent(double p, int N) { return N * p / (N - p); }

GeometryConstants eval_mountain_geometry(const ProblemParams& params, double domain_measure) {
    const int N = formula_dim(params);
    const double pb = params.p_bar;
    const double q = params.q;
    GeometryConstants g;
    g.model = params.model();
    g.theta = sobolev_theta(pb, N);
    g.C_geom = std::pow(pb * (N - 1.0) / (std::sqrt(static_cast<double>(N)) * (N - pb)), q) *
               std::max(1.0, domain_measure);
    g.r = std::pow(1.0 / (pb * g.C_geom + 1.0), 1.0 / (q - pb));
    g.alpha = std::pow(g.r, q) / pb;
    return g;
}

double lr_norm(const FeField& u, double r, const AssemblyOptions& opt) {
    return std::pow(kernels::abs_power_integral(u, r, opt.quad, opt.exec), 1.0 / r);
}

double lr_distance(const FeField& u, const FeField& v, double r, const AssemblyOptions& opt) {
    if (u.size() != v.size())
        throw Error("invalid_argument", "L^r distance needs fields on the same mesh");
    std::vector<double> d(u.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = u[i] - v[i];
    return lr_norm(FeField(u.mesh_ptr(), std::move(d), false), r, opt);
}

SobolevReport sobolev_check(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt) {
    const int N = formula_dim(params);
    SobolevReport s;
    s.model = params.model();
    const double theta = sobolev_theta(params.p, N);
    s.rhs = theta / std::sqrt(static_cast<double>(N)) * w1p_norm(u, params.p, opt);
    if (s.model) {
        s.p_star = INFINITY;
        s.lhs = std::max(std::abs(u.max_value()), std::abs(u.min_value()));
    } else {
        s.p_star = sobolev_exponent(params.p, N);
        s.lhs = lr_norm(u, s.p_star, opt);
    }
    s.holds = s.lhs <= s.rhs * (1.0 + 1e-10);
    return s;
}

}  // namespace bvmp
