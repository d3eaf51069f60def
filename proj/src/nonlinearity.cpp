#include "bvmp/nonlinearity.hpp"

#include "bvmp/error.hpp"
#include "element_ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bvmp {

int heaviside(double t) { return t >= 0.0 ? 1 : 0; }

double f_beta(double t, const ProblemParams& params) {
    if (heaviside(t - params.beta) == 0 || t == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(t), params.q - 1.0), t);
}

double F_beta(double t, const ProblemParams& params) {
    if (t <= params.beta) return 0.0;
    return (std::pow(t, params.q) - std::pow(params.beta, params.q)) / params.q;
}

double f_beta_mollified(double t, const ProblemParams& params, double eps) {
    if (!(eps > 0.0)) throw Error("invalid_argument", "mollification width must be positive");
    const double h = std::clamp((t - params.beta) / eps + 0.5, 0.0, 1.0);
    if (h == 0.0 || t <= 0.0) return 0.0;
    return h * std::pow(t, params.q - 1.0);
}

ClarkeInterval clarke_interval(double t, const ProblemParams& params) {
    if (t < params.beta) return {0.0, 0.0};
    if (t == params.beta) return {0.0, t > 0.0 ? std::pow(t, params.q - 1.0) : 0.0};
    const double v = std::pow(t, params.q - 1.0);
    return {v, v};
}

SelectionRule parse_selection_rule(std::string_view name) {
    if (name == "pointwise") return SelectionRule::pointwise;
    if (name == "lower") return SelectionRule::lower;
    if (name == "upper") return SelectionRule::upper;
    throw Error("invalid_argument", fmt::format("unknown selection rule '{}' (pointwise, lower, upper)", name));
}

std::string_view to_string(SelectionRule rule) {
    switch (rule) {
        case SelectionRule::pointwise: return "pointwise";
        case SelectionRule::lower: return "lower";
        case SelectionRule::upper: return "upper";
    }
    return "pointwise";
}

double select(double t, const ProblemParams& params, SelectionRule rule) {
    const ClarkeInterval c = clarke_interval(t, params);
    switch (rule) {
        case SelectionRule::lower: return c.lo;
        case SelectionRule::upper: return c.hi;
        case SelectionRule::pointwise: break;
    }
    return f_beta(t, params);
}

SelectionField::SelectionField(MeshPtr mesh, ProblemParams params, SelectionRule rule, std::vector<double> nodal_u,
                               std::vector<double> nodal_rho, std::vector<Sample> samples, std::vector<double> load)
    : mesh_(std::move(mesh)),
      params_(params),
      rule_(rule),
      nodal_u_(std::move(nodal_u)),
      nodal_rho_(std::move(nodal_rho)),
      samples_(std::move(samples)),
      load_(std::move(load)) {
    if (!mesh_) throw Error("invalid_argument", "selection field needs a mesh");
    if (nodal_u_.size() != mesh_->num_nodes() || nodal_rho_.size() != mesh_->num_nodes() ||
        load_.size() != mesh_->num_nodes())
        throw Error("invalid_argument", "selection field arrays must have one entry per node");
}

SelectionField selection_rho(const FeField& u, const ProblemParams& params, SelectionRule rule,
                             const Quadrature& quad) {
    const Mesh& mesh = u.mesh();
    std::vector<double> nodal_u(u.values().begin(), u.values().end());
    std::vector<double> nodal_rho(mesh.num_nodes());
    for (std::size_t i = 0; i < nodal_rho.size(); ++i) nodal_rho[i] = select(nodal_u[i], params, rule);

    std::vector<SelectionField::Sample> samples;
    std::vector<double> load(mesh.num_nodes(), 0.0);
    std::array<double, 3> local{};
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        detail::element_samples(mesh, e, u.values(), params, rule, quad, samples);
        detail::element_load(mesh, e, u.values(), params, rule, quad, local);
        const Element& el = mesh.elements()[e];
        for (int k = 0; k < mesh.nodes_per_element(); ++k) load[el[k]] += local[k];
    }
    return SelectionField(u.mesh_ptr(), params, rule, std::move(nodal_u), std::move(nodal_rho), std::move(samples),
                          std::move(load));
}

}  // namespace bvmp
