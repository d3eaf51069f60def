#pragma once

#include "bvmp/energy.hpp"
#include "bvmp/fields.hpp"
#include "bvmp/params.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bvmp {

/// Descent metric for the peak update.
///   stiffness: plain Dirichlet stiffness matrix
///   weighted:  stiffness with element weights |grad u|^{p-2}
///   hessian:   second derivative of Q_p (anisotropic weights)
enum class Metric { stiffness, weighted, hessian };

Metric parse_metric(const std::string& name);
std::string to_string(Metric metric);

struct MpassConfig {
    int m = 16;                  // path segments
    int max_iter = 4000;
    double step0 = 1.0;          // first trial step
    double step_max = 4.0;
    double armijo = 1e-4;
    double backtrack = 0.5;
    double eps_g = 1e-9;         // sup norm of the nodal residual at the peak
    double eps_c = 1e-10;        // level change over the last 5 iterations
    double delta_e = 0.1;        // endpoint depth: I(e) < -delta_e
    double endpoint_cap = 1099511627776.0;  // 2^40
    int max_densify = 2;
    Metric metric = Metric::hessian;
    double metric_eps = 1e-10;   // gradient floor for the weights, relative to max |grad u|
    AssemblyOptions assembly{};
};

void validate(const MpassConfig& cfg);

struct TraceRow {
    int iteration = 0;
    double level = 0.0;
    double residual = 0.0;
    double step = 0.0;
    int peak = 0;
    int segments = 0;
};

/// Discrete path of interior-DOF vectors from 0 to e. `low` holds the
/// low-order parts of the nodes (double-double storage) and may be empty.
struct Path {
    std::vector<std::vector<double>> nodes;
    std::vector<std::vector<double>> low;
};

struct SaddleResult {
    explicit SaddleResult(FeField field) : u(std::move(field)) {}

    FeField u;
    double c = 0.0;               // I_{p,beta}(u)
    double grad_residual = 0.0;   // sup norm of the nodal residual at u
    int iterations = 0;
    double lambda_proxy = 0.0;    // dual stiffness norm of the residual
    double alpha_h = 0.0;         // smallest J on the ring ||grad u||_p = r seen along the paths
    double ring_radius = 0.0;
    int segments = 0;
    int densifications = 0;
    int tie_nudges = 0;
    bool converged = false;
    Path path;
    std::vector<TraceRow> trace;
};

/// Tent (1D) or pyramid (2D) with peak 1 at the centre of the domain.
FeField default_bump(const MeshPtr& mesh);

/// e = t * bump for the smallest t in {1, 2, 4, ...} with I_{p_bar, beta}(e) < -delta_e.
/// `params.beta` plays the role of beta_0.
FeField find_endpoint(const ProblemParams& params, const MeshPtr& mesh, const FeField& bump,
                      const MpassConfig& cfg = {});

/// Minimax descent on a discrete path from 0 to e. Throws Error("collapse") or
/// Error("budget").
SaddleResult mountain_pass_solve(const ProblemParams& params, const MeshPtr& mesh, const FeField& e,
                                 const MpassConfig& cfg = {}, const std::optional<Path>& warm = std::nullopt);

struct OracleResult {
    double level = 0.0;
    double tolerance = 0.0;   // grid-cell oscillation bound (2 DOFs) or refinement bound (1 DOF)
    std::vector<double> argmax;
};

/// Exhaustive minimax on meshes with at most two interior DOFs. One DOF: max of I on
/// the segment [0, e] (grid then golden refinement). Two DOFs: bottleneck over monotone
/// grid paths in the box [0, e_1] x [0, e_2] by dynamic programming.
OracleResult brute_saddle_oracle(const ProblemParams& params, const MeshPtr& mesh, const FeField& e, int grid,
                                 const AssemblyOptions& opt = {});

}  // namespace bvmp
