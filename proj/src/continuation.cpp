#include "bvmp/continuation.hpp"

#include "bvmp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

namespace bvmp {

std::vector<double> default_p_schedule(int K) {
    if (K < 1) throw Error("invalid_argument", "p-schedule length must be >= 1");
    std::vector<double> p;
    for (int k = 1; k <= K; ++k) p.push_back(1.0 + std::ldexp(1.0, -k));
    return p;
}

void validate(const Schedule& s, const ProblemParams& params) {
    validate(params);
    validate(s.solver);
    if (s.p.empty()) throw Error("invalid_argument", "schedule.p must not be empty");
    for (std::size_t k = 0; k < s.p.size(); ++k) {
        if (!(s.p[k] > 1.0 && s.p[k] <= params.p_bar))
            throw Error("invalid_argument",
                        fmt::format("schedule.p entries must lie in (1, p_bar = {}] (got {})", params.p_bar, s.p[k]));
        if (k > 0 && !(s.p[k] < s.p[k - 1]))
            throw Error("invalid_argument", "schedule.p must be strictly decreasing");
    }
    if (!(s.beta0 > 0.0) || !std::isfinite(s.beta0))
        throw Error("invalid_argument", fmt::format("schedule beta0 must be finite and > 0 (got {})", s.beta0));
    for (std::size_t k = 0; k < s.beta.size(); ++k) {
        if (!(s.beta[k] >= 0.0 && s.beta[k] <= s.beta0))
            throw Error("invalid_argument",
                        fmt::format("schedule.beta entries must lie in [0, beta0 = {}] (got {})", s.beta0, s.beta[k]));
        if (k > 0 && !(s.beta[k] < s.beta[k - 1]))
            throw Error("invalid_argument", "schedule.beta must be strictly decreasing");
    }
    const int N = formula_dim(params);
    const double rmax = static_cast<double>(N) / (N - 1);
    for (double r : s.lr)
        if (!(r >= 1.0 && r < rmax))
            throw Error("invalid_argument", fmt::format("L^r exponents must satisfy 1 <= r < N/(N-1) = {} (got {})", rmax, r));
    if (!(s.eps_c > 0.0) || !(s.bound_tol >= 0.0) || !(s.gap_tol >= 0.0) || !(s.eps_g_cert >= 0.0) ||
        !(s.pairing_tol >= 0.0) || !(s.flux_tol >= 0.0))
        throw Error("invalid_argument", "schedule tolerances must be nonnegative (eps_c > 0)");
}

MoserBound moser_bound(const ProblemParams& params, const FeField& u, double C, const AssemblyOptions& opt) {
    const int N = formula_dim(params);
    const double p = params.p, q = params.q;
    MoserBound m;
    m.model = params.model();
    m.p_star = sobolev_exponent(p, N);
    m.alpha_star = p * m.p_star / (m.p_star - (q - p));
    m.sigma = m.p_star / m.alpha_star;
    // q = p exactly gives C^0 = 1 without evaluating 0 * log(C)
    const double cpow = q == p ? 1.0 : std::pow(C, (q - p) / p);
    m.theta = std::pow(sobolev_theta(p, N), q / p) * cpow;
    m.lpstar_norm = lr_norm(u, m.p_star, opt);
    const double s1 = m.sigma - 1.0;
    m.bound = std::pow(2.0 * m.theta, 1.0 / s1) * std::pow(m.sigma, m.sigma / (s1 * s1)) * m.lpstar_norm;
    m.sup_norm = std::max(std::abs(u.max_value()), std::abs(u.min_value()));
    m.holds = m.sup_norm <= m.bound;
    return m;
}

Certificate certify_triple(const FeField& u, const FluxField& z, const SelectionField& rho, const ProblemParams& params,
                           const CertificateTolerances& tol) {
    const Mesh& mesh = u.mesh();
    Certificate c;
    c.divergence = weak_divergence_residual(z, rho, mesh).max_abs;
    const PairingReport pr = pairing(z, u);
    c.pairing_gap = pr.active.empty() ? 0.0 : 1.0 - pr.min_ratio;
    c.flux_excess = std::max(flux_sup_norm(z) - 1.0, 0.0);
    const auto nodal = rho.nodal();
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
        const double v = clarke_interval(u[i], params).violation(nodal[i]);
        if (v > 0.0) {
            c.clarke_nodes.push_back(static_cast<int>(i));
            c.clarke_violation = std::max(c.clarke_violation, v);
        }
    }
    for (const auto& s : rho.samples()) {
        const double v = clarke_interval(s.u, params).violation(s.rho);
        if (v > 0.0) {
            ++c.clarke_samples;
            c.clarke_violation = std::max(c.clarke_violation, v);
        }
    }
    c.pass[0] = c.divergence <= tol.divergence;
    c.pass[1] = c.pairing_gap <= tol.pairing;
    c.pass[2] = c.flux_excess <= tol.flux;
    c.pass[3] = c.clarke_violation == 0.0;
    return c;
}

double superlevel_measure(const FeField& u, double beta, Exec exec) {
    return kernels::superlevel_measure(u, beta, exec);
}

double eval_I_bv(const FeField& u, const ProblemParams& params, const AssemblyOptions& opt) {
    return bv_norm(u, opt.exec) - eval_F_integral(u, params, opt);
}

bool SweepResult::all_ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.ok || !c.gating; });
}

bool BetaSweepResult::all_ok() const {
    if (!std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.ok || !c.gating; })) return false;
    return std::all_of(sweeps.begin(), sweeps.end(), [](const SweepResult& s) { return s.all_ok(); });
}

FeField sweep_endpoint(const ProblemParams& params, const MeshPtr& mesh, const Schedule& s) {
    return find_endpoint(params.with_beta(s.beta0), mesh, default_bump(mesh), s.solver);
}

double default_beta0(const ProblemParams& params, const MeshPtr& coarse, const MpassConfig& cfg) {
    const ProblemParams P = params.with_beta(0.0).with_p(params.p_bar);
    const FeField e = find_endpoint(P, coarse, default_bump(coarse), cfg);
    return 0.5 * mountain_pass_solve(P, coarse, e, cfg).u.max_value();
}

namespace {

RunRecord make_record(const SaddleResult& r, const ProblemParams& P, double C, const Schedule& s,
                      const FeField* prev, FluxField& z_out, std::optional<SelectionField>& rho_out) {
    const FeField& u = r.u;
    const AssemblyOptions& opt = s.solver.assembly;
    RunRecord rec;
    rec.p = P.p;
    rec.beta = P.beta;
    rec.c = r.c;
    rec.grad_energy = kernels::grad_power_sum(u, P.p, opt.exec);
    rec.energy_bound = C;
    const MoserBound mb = moser_bound(P, u, C, opt);
    rec.sup_norm = mb.sup_norm;
    rec.moser = mb.bound;
    rec.tv = total_variation(u, opt.exec);
    rec.bv = bv_norm(u, opt.exec);
    z_out = extract_flux(u, P.p);
    rec.flux_sup = flux_sup_norm(z_out);
    const BoundarySignReport bs = boundary_sign_report(z_out, u, u.mesh());
    rec.max_normal_trace = bs.max_normal_trace;
    rec.boundary_sign = bs.integral;
    const PairingReport pr = pairing(z_out, u);
    rec.pairing_min = pr.min_ratio;
    rec.pairing_max = pr.max_ratio;
    double closed = std::numeric_limits<double>::infinity();
    for (int e : pr.active) closed = std::min(closed, std::pow(norm(u.gradient(e)), P.p - 1.0));
    rec.pairing_closed = pr.active.empty() ? 0.0 : closed;
    rec.superlevel = superlevel_measure(u, P.beta, opt.exec);
    rho_out.emplace(selection_rho(u, P, SelectionRule::pointwise, opt.quad));
    const auto load = rho_out->load();
    for (std::size_t i = 0; i < load.size(); ++i) rec.rho_u += load[i] * u[i];
    rec.grad_residual = r.grad_residual;
    rec.lambda_proxy = r.lambda_proxy;
    rec.alpha_h = r.alpha_h;
    rec.iterations = r.iterations;
    rec.segments = r.segments;
    rec.trace = r.trace;
    for (double rr : s.lr)
        rec.lr_prev.push_back(prev ? lr_distance(u, *prev, rr, opt) : std::numeric_limits<double>::quiet_NaN());
    CertificateTolerances tol;
    tol.divergence = s.eps_g_cert > 0.0 ? s.eps_g_cert : s.solver.eps_g;
    tol.pairing = s.pairing_tol;
    tol.flux = s.flux_tol;
    rec.cert = certify_triple(u, z_out, *rho_out, P, tol);
    return rec;
}

void add_check(std::vector<Check>& checks, std::string name, bool ok, std::string detail, bool gating = true) {
    checks.push_back({std::move(name), ok, std::move(detail), gating});
}

void sweep_checks(SweepResult& out, const Schedule& s, double measure) {
    const auto& R = out.records;
    for (std::size_t k = 1; k < R.size(); ++k)
        add_check(out.checks, fmt::format("level_monotone[p={}]", R[k].p), R[k].c <= R[k - 1].c + s.eps_c,
                  fmt::format("c = {:.17g} after {:.17g}", R[k].c, R[k - 1].c));
    for (const RunRecord& r : R) {
        add_check(out.checks, fmt::format("energy_bound[p={}]", r.p), r.grad_energy <= out.C + s.bound_tol,
                  fmt::format("int |grad u|^p = {:.17g}, C = {:.17g}", r.grad_energy, out.C));
        add_check(out.checks, fmt::format("moser[p={}]", r.p), r.sup_norm <= r.moser,
                  fmt::format("sup |u| = {:.17g}, bound = {:.17g}", r.sup_norm, r.moser));
        const double young = r.grad_energy / r.p + (r.p - 1.0) / r.p * measure;
        add_check(out.checks, fmt::format("bv_young[p={}]", r.p), r.bv <= young + s.bound_tol,
                  fmt::format("bv = {:.17g}, (1/p) int |grad u|^p + (p-1)/p |Omega| = {:.17g}", r.bv, young));
        add_check(out.checks, fmt::format("pairing_closed_form[p={}]", r.p), r.pairing_min > r.pairing_closed - 1e-8,
                  fmt::format("min ratio {:.17g}, min |grad u|^(p-1) {:.17g}", r.pairing_min, r.pairing_closed));
        add_check(out.checks, fmt::format("certificate_i[p={}]", r.p), r.cert.pass[0],
                  fmt::format("divergence residual {:.3e}", r.cert.divergence));
        add_check(out.checks, fmt::format("certificate_iv[p={}]", r.p), r.cert.pass[3],
                  fmt::format("clarke violation {:.3e}", r.cert.clarke_violation));
    }
    const RunRecord& last = R.back();
    const double J = last.c - (last.p - 1.0) / last.p * measure;
    if (J >= out.alpha) {
        out.floor_branch = "alpha";
        add_check(out.checks, "nontriviality", last.rho_u >= out.alpha - 1e-8,
                  fmt::format("int rho u = {:.17g}, alpha = {:.17g}", last.rho_u, out.alpha));
    } else {
        out.floor_branch = "half_level";
        add_check(out.checks, "nontriviality", last.rho_u >= 0.5 * last.c,
                  fmt::format("int rho u = {:.17g}, level below alpha, 0.5 c = {:.17g}", last.rho_u, 0.5 * last.c));
    }
}

}  // namespace

SweepResult p_sweep(const ProblemParams& params, double beta, const MeshPtr& mesh, const FeField& e,
                    const Schedule& s) {
    validate(s, params);
    const ProblemParams P = params.with_beta(beta);
    validate(P.with_p(P.p_bar));
    std::vector<double> ps = s.p;
    const bool anchored = ps.front() != P.p_bar;
    if (anchored) ps.insert(ps.begin(), P.p_bar);
    SweepResult out;
    out.beta = beta;
    out.alpha = eval_mountain_geometry(P, mesh->measure()).alpha;
    std::optional<Path> warm;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const ProblemParams Pk = P.with_p(ps[k]);
        try {
            SaddleResult r = mountain_pass_solve(Pk, mesh, e, s.solver, warm);
            if (k == 0) out.C = P.p_bar * P.q / (P.q - P.p_bar) * r.c;
            FluxField z(mesh, std::vector<Point>(mesh->num_elements(), Point{0.0, 0.0}));
            std::optional<SelectionField> rho;
            RunRecord rec = make_record(r, Pk, out.C, s, out.fields.empty() ? nullptr : &out.fields.back(), z, rho);
            rec.anchor = anchored && k == 0;
            warm = std::move(r.path);
            out.records.push_back(std::move(rec));
            out.fields.push_back(r.u);
            out.u = r.u;
            out.z = std::move(z);
            out.rho = std::move(rho);
        } catch (const Error& err) {
            throw SweepError(err, out);
        }
    }
    sweep_checks(out, s, mesh->measure());
    return out;
}

BetaSweepResult beta_sweep(const ProblemParams& params, const MeshPtr& mesh, const Schedule& s) {
    validate(s, params);
    if (s.beta.empty() || s.beta.back() != 0.0)
        throw Error("invalid_argument", "beta sweep needs a schedule ending with beta = 0");
    const FeField e = sweep_endpoint(params, mesh, s);
    const int nb = static_cast<int>(s.beta.size());
    std::vector<std::optional<SweepResult>> chains(nb);
    std::vector<std::exception_ptr> errors(nb);
#pragma omp parallel for schedule(dynamic, 1)
    for (int j = 0; j < nb; ++j) {
        try {
            chains[j] = p_sweep(params, s.beta[j], mesh, e, s);
        } catch (...) {
            errors[j] = std::current_exception();
        }
    }
    for (int j = 0; j < nb; ++j)
        if (errors[j]) std::rethrow_exception(errors[j]);

    BetaSweepResult out;
    for (auto& c : chains) out.sweeps.push_back(std::move(*c));
    const AssemblyOptions& opt = s.solver.assembly;
    const double measure = mesh->measure();
    const FeField& u0 = *out.sweeps.back().u;
    out.alpha = out.sweeps.front().alpha;
    out.mu_hat = std::numeric_limits<double>::infinity();
    const double pmin = s.p.back();
    for (int j = 0; j < nb; ++j) {
        const SweepResult& sw = out.sweeps[j];
        const FeField& u = *sw.u;
        const ProblemParams Pj = params.with_beta(s.beta[j]).with_p(pmin);
        std::vector<double> d;
        for (double r : s.lr) d.push_back(lr_distance(u, u0, r, opt));
        out.lr_to_zero.push_back(std::move(d));
        const double m = superlevel_measure(u, s.beta[j], opt.exec);
        out.superlevel.push_back(m);
        if (s.beta[j] > 0.0) out.mu_hat = std::min(out.mu_hat, m);
        const double Ibv = eval_I_bv(u, Pj, opt);
        out.I_bv.push_back(Ibv);
        // int_{u > beta} u^q = q int F_beta(u) + beta^q |{u > beta}|
        const double upper = Pj.q * eval_F_integral(u, Pj, opt) + std::pow(s.beta[j], Pj.q) * m;
        out.nontrivial_rhs.push_back(2.0 * std::pow(s.beta[j], Pj.q) * measure + upper);
        add_check(out.checks, fmt::format("nontrivial_chain[beta={}]", s.beta[j]), out.alpha <= out.nontrivial_rhs.back(),
                  fmt::format("alpha = {:.17g}, 2 beta^q |Omega| + int_(u>beta) u^q = {:.17g}", out.alpha,
                              out.nontrivial_rhs.back()));
        const double c = sw.records.back().c;
        const double gap = std::abs(Ibv - c);
        // vanishes only as p_min -> 1; at a fixed p_min the Young gap on steep elements dominates
        add_check(out.checks, fmt::format("energy_gap[beta={}]", s.beta[j]),
                  gap <= s.gap_tol + (pmin - 1.0) / pmin * measure,
                  fmt::format("|I_beta(u_beta) - c| = {:.17g}", gap), false);
    }
    if (nb == 1) out.mu_hat = 0.0;
    for (int j = 1; j + 1 < nb; ++j) {
        const double ratio = out.lr_to_zero[j][0] / out.lr_to_zero[j - 1][0];
        add_check(out.checks, fmt::format("l1_decrease[beta={}]", s.beta[j]), ratio < 1.0,
                  fmt::format("L1(u_beta, u_0) ratio {:.17g}", ratio));
    }
    add_check(out.checks, "mu_hat_positive", out.mu_hat > 0.0, fmt::format("mu_hat = {:.17g}", out.mu_hat));
    for (std::size_t k = 0; k < s.p.size(); ++k)
        for (int j = 1; j < nb; ++j) {
            // records after an optional anchor line up with the schedule
            const auto& a = out.sweeps[j - 1].records;
            const auto& b = out.sweeps[j].records;
            const double ca = a[a.size() - s.p.size() + k].c, cb = b[b.size() - s.p.size() + k].c;
            add_check(out.checks, fmt::format("beta_order[p={},beta={}]", s.p[k], s.beta[j]), cb <= ca + s.eps_c,
                      fmt::format("c = {:.17g} at beta {} vs {:.17g} at beta {}", cb, s.beta[j], ca, s.beta[j - 1]));
        }
    return out;
}

}  // namespace bvmp
