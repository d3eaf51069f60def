#pragma once

// The two limits: p -> 1 at fixed beta, then beta -> 0 at the end of the
// p-schedule. Every estimate the limit argument uses is evaluated and recorded
// per solve; the checks are reported, never thrown, so that a failing
// estimate still leaves a complete table behind.

#include "bvmp/bv.hpp"
#include "bvmp/energy.hpp"
#include "bvmp/error.hpp"
#include "bvmp/mpass.hpp"
#include "bvmp/nonlinearity.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bvmp {

struct Schedule {
    std::vector<double> p;      // strictly decreasing, in (1, p_bar]
    std::vector<double> beta;   // strictly decreasing, in [0, beta0]; beta = 0 only as the last entry
    double beta0 = 0.0;         // threshold at which the endpoint is built
    MpassConfig solver{};
    std::vector<double> lr{1.0, 1.2};   // exponents for the L^r distance tables
    double eps_c = 1e-6;        // level monotonicity tolerance
    double bound_tol = 1e-8;    // slack in the gradient-energy bound
    double gap_tol = 1e-6;      // slack in the BV energy-gap check
    double eps_g_cert = 0.0;    // certificate tolerance for (i); 0 means solver.eps_g
    double pairing_tol = 1.0;   // certificate tolerance for (ii)
    double flux_tol = 1.0;      // certificate tolerance for (iii)
};

/// Default exponent schedule 1 + 2^{-k}, k = 1..K.
std::vector<double> default_p_schedule(int K = 7);

/// Throws Error("invalid_argument") naming the violated invariant.
void validate(const Schedule& s, const ProblemParams& params);

struct MoserBound {
    double p_star = 0.0;
    double alpha_star = 0.0;
    double sigma = 0.0;
    double theta = 0.0;
    double lpstar_norm = 0.0;
    double bound = 0.0;
    double sup_norm = 0.0;
    bool holds = false;
    bool model = false;
};

/// L^infinity bound from the Moser iteration with the energy constant C.
MoserBound moser_bound(const ProblemParams& params, const FeField& u, double C,
                       const AssemblyOptions& opt = {});

struct CertificateTolerances {
    double divergence = 1e-9;   // (i)
    double pairing = 1.0;       // (ii)
    double flux = 1.0;          // (iii)
};

struct Certificate {
    double divergence = 0.0;        // (i) max nodal weak-divergence residual
    double pairing_gap = 0.0;       // (ii) 1 - min pairing ratio on the active set
    double flux_excess = 0.0;       // (iii) max(flux_sup - 1, 0)
    double clarke_violation = 0.0;  // (iv) max distance of rho to the Clarke interval
    std::vector<int> clarke_nodes;  // nodes where (iv) is positive
    int clarke_samples = 0;         // quadrature samples where (iv) is positive
    bool pass[4] = {false, false, false, false};
    bool all_pass() const { return pass[0] && pass[1] && pass[2] && pass[3]; }
};

/// The four residuals of the solution triple (u, z, rho).
Certificate certify_triple(const FeField& u, const FluxField& z, const SelectionField& rho,
                           const ProblemParams& params, const CertificateTolerances& tol = {});

/// Exact measure of {u > beta}.
double superlevel_measure(const FeField& u, double beta, Exec exec = Exec::parallel);

/// BV energy int |Du| + int_{boundary} |u| - int F_beta(u).
double eval_I_bv(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt = {});

struct Check {
    std::string name;
    bool ok = false;
    std::string detail;
    bool gating = true;   // false: an o(1) trend reported with its value, not counted by all_ok()
};

struct RunRecord {
    double p = 0.0;
    double beta = 0.0;
    double c = 0.0;
    double grad_energy = 0.0;      // int |grad u|^p
    double energy_bound = 0.0;     // C = p_bar q/(q - p_bar) c_{p_bar, beta}
    double sup_norm = 0.0;
    double moser = 0.0;
    double tv = 0.0;
    double bv = 0.0;
    double flux_sup = 0.0;
    double max_normal_trace = 0.0;
    double boundary_sign = 0.0;    // int_{boundary} |u| + u [z, nu]
    double pairing_min = 0.0;
    double pairing_max = 0.0;
    double pairing_closed = 0.0;   // min over the active set of |grad u|^{p-1}
    double superlevel = 0.0;
    double rho_u = 0.0;            // int rho u
    double grad_residual = 0.0;
    double lambda_proxy = 0.0;
    double alpha_h = 0.0;
    int iterations = 0;
    int segments = 0;
    std::vector<double> lr_prev;   // L^r distance to the previous record, NaN for the first
    Certificate cert;
    std::vector<TraceRow> trace;
    bool anchor = false;           // p_bar solve prepended to fix the constant C
};

struct SweepResult {
    double beta = 0.0;
    double C = 0.0;
    double alpha = 0.0;            // continuum mountain-pass floor
    std::vector<RunRecord> records;
    std::vector<FeField> fields;   // one per record
    std::vector<Check> checks;
    std::optional<FeField> u;      // terminal field u_beta
    std::optional<FluxField> z;
    std::optional<SelectionField> rho;
    std::string floor_branch;      // "alpha" or "half_level" (nontriviality floor)
    bool all_ok() const;
};

/// Error thrown by the sweeps when a solve fails; carries the records completed so far.
class SweepError : public Error {
public:
    SweepError(const Error& cause, SweepResult partial)
        : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}
    const SweepResult& partial() const { return partial_; }

private:
    SweepResult partial_;
};

/// Endpoint at (p_bar, beta0) for the default bump.
FeField sweep_endpoint(const ProblemParams& params, const MeshPtr& mesh, const Schedule& s);

/// Warm-started solves down the p-schedule at threshold beta. A p_bar solve is
/// prepended (as an anchor record) when the schedule does not start at p_bar.
SweepResult p_sweep(const ProblemParams& params, double beta, const MeshPtr& mesh, const FeField& e,
                    const Schedule& s);

struct BetaSweepResult {
    std::vector<SweepResult> sweeps;          // one per beta, in schedule order
    std::vector<std::vector<double>> lr_to_zero;  // [beta][r] distance of u_beta to u_0
    std::vector<double> superlevel;           // |{u_beta > beta}| per beta
    double mu_hat = 0.0;                      // min over beta > 0
    std::vector<double> I_bv;                 // I_beta(u_beta)
    std::vector<double> nontrivial_rhs;       // 2 beta^q |Omega| + int_{u > beta} u^q
    double alpha = 0.0;
    std::vector<Check> checks;
    bool all_ok() const;
};

/// One p-sweep per beta (chains run in parallel under OpenMP, merged in schedule order).
BetaSweepResult beta_sweep(const ProblemParams& params, const MeshPtr& mesh, const Schedule& s);

/// beta0 = 0.5 * max of the beta = 0 mountain-pass solution at p_bar on `coarse`.
double default_beta0(const ProblemParams& params, const MeshPtr& coarse, const MpassConfig& cfg);

}  // namespace bvmp
