#pragma once

#include "bvmp/fields.hpp"
#include "bvmp/params.hpp"
#include "bvmp/quadrature.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace bvmp {

/// H(t) = 1 for t >= 0, else 0 (the tie at 0 resolves to 1).
int heaviside(double t);

/// f_beta(t) = H(t - beta) |t|^{q-2} t.
double f_beta(double t, const ProblemParams& params);

/// F_beta(t) = integral of f_beta over [0, t]: (t^q - beta^q)/q above beta, 0 otherwise.
double F_beta(double t, const ProblemParams& params);

/// f_beta with H replaced by a linear ramp of width eps centred at beta.
/// Cross-check mode only; never used by the solver.
double f_beta_mollified(double t, const ProblemParams& params, double eps);

struct ClarkeInterval {
    double lo = 0.0;
    double hi = 0.0;

    /// Distance from v to [lo, hi]; 0 inside.
    double violation(double v) const { return v < lo ? lo - v : (v > hi ? v - hi : 0.0); }
};

/// Generalized gradient of F_beta: {0} below beta, [0, beta^{q-1}] at beta, {t^{q-1}} above.
ClarkeInterval clarke_interval(double t, const ProblemParams& params);

enum class SelectionRule { pointwise, lower, upper };

SelectionRule parse_selection_rule(std::string_view name);
std::string_view to_string(SelectionRule rule);

/// Value of the selection rule at t; always inside clarke_interval(t).
double select(double t, const ProblemParams& params, SelectionRule rule);

/// A selection rho in the Clarke interval of u, stored as nodal values,
/// quadrature-point samples and the assembled load vector int rho phi_i.
class SelectionField {
public:
    struct Sample {
        double u = 0.0;
        double rho = 0.0;
    };

    SelectionField(MeshPtr mesh, ProblemParams params, SelectionRule rule, std::vector<double> nodal_u,
                   std::vector<double> nodal_rho, std::vector<Sample> samples, std::vector<double> load);

    const Mesh& mesh() const { return *mesh_; }
    const ProblemParams& params() const { return params_; }
    SelectionRule rule() const { return rule_; }

    std::span<const double> nodal_u() const { return nodal_u_; }
    std::span<const double> nodal() const { return nodal_rho_; }
    std::span<const Sample> samples() const { return samples_; }
    /// int rho phi_i dx for every node (boundary nodes included).
    std::span<const double> load() const { return load_; }

    /// Overrides one nodal value (used by snapshot import and perturbation tests).
    void set_nodal(std::size_t node, double value) { nodal_rho_.at(node) = value; }

private:
    MeshPtr mesh_;
    ProblemParams params_;
    SelectionRule rule_;
    std::vector<double> nodal_u_;
    std::vector<double> nodal_rho_;
    std::vector<Sample> samples_;
    std::vector<double> load_;
};

/// Builds the selection for u under the given rule. The load vector uses the
/// same clipping and quadrature as the energy assembly.
SelectionField selection_rho(const FeField& u, const ProblemParams& params,
                             SelectionRule rule = SelectionRule::pointwise, const Quadrature& quad = {});

}  // namespace bvmp
