// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Usage: bvmp_acceptance [work_dir]
//
// The sweep criteria go through the same command drivers as the CLI and are
// judged from the written tables, recomputing every inequality from the raw
// columns rather than trusting the run's own check flags.

#include "bvmp/bv.hpp"
#include "bvmp/cli_io.hpp"
#include "bvmp/energy.hpp"
#include "bvmp/mpass.hpp"
#include "oracles.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace bvmp;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// pinned tolerances
constexpr double kOracleRel = 1e-4;          // C1, one DOF
constexpr double kFdRel = 1e-5;              // C2
constexpr double kFdStep = 1e-6;
constexpr double kEpsC = 1e-6;               // C3
constexpr double kBoundSlack = 1e-8;         // C4
constexpr double kFluxTarget = 1.05;         // C5, at p = 1.05
constexpr double kPairingSlack = 1e-8;
constexpr double kEpsG = 1e-9;               // C5 residual (i), the solver default
constexpr double kFloorSlack = 1e-8;         // C6
constexpr double kMuFraction = 0.01;         // C7
constexpr double kMuRatioLo = 0.5, kMuRatioHi = 2.0;
constexpr double kGreen = 1e-12;             // C8
constexpr double kOracleExact = 1e-10;

constexpr double kLimitC1 = 10.0, kLimitC2 = 5.0, kLimitC3 = 300.0, kLimitC7 = 1200.0, kLimitC8 = 5.0;

const char* kC3Config = R"(domain.kind = rectangle
domain.nx = 16
domain.ny = 16
params.q = 1.5
params.p_bar = 1.25
schedule.p = 1.25, 1.2, 1.15, 1.1, 1.05
schedule.beta = 0.3, 0.2, 0.1
out.snapshots = none
)";

// p = 1.05 is left out: at 32 x 32 the solver stalls there (see README)
const char* kC7Config = R"(domain.kind = rectangle
domain.nx = {0}
domain.ny = {0}
params.q = 1.5
params.p_bar = 1.25
schedule.p = 1.25, 1.2, 1.15, 1.1
schedule.beta = 0.4, 0.2, 0.1, 0.05, 0
out.snapshots = none
)";

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
    if (!ok) ++failures;
    fmt::print("[{}] criterion {}: {}\n", ok ? "PASS" : "FAIL", id, detail);
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Table {
    std::map<std::string, std::size_t> col;
    std::vector<std::vector<std::string>> rows;
    double num(std::size_t r, const std::string& name) const { return std::stod(rows[r].at(col.at(name))); }
};

Table read_table(const fs::path& path) {
    std::ifstream in(path);
    Table t;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (header) {
            for (std::size_t i = 0; i < cells.size(); ++i) t.col[cells[i]] = i;
            header = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ProblemParams params(int dim, double q, double p, double beta) {
    ProblemParams P;
    P.dim = dim;
    P.q = q;
    P.p = P.p_bar = p;
    P.beta = beta;
    return P;
}

int run_command(const std::string& text, const fs::path& out, const std::function<int(const RunConfig&)>& cmd) {
    RunConfig cfg = parse_config_text(text, "acceptance");
    fs::remove_all(out);
    cfg.out_dir = out;
    return cmd(cfg);
}

void criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemParams P = params(1, 1.8, 1.5, 0.2);
    const MeshPtr one = build_interval_mesh(1.0, 2);
    const FeField e1 = find_endpoint(P, one, default_bump(one));
    const SaddleResult r1 = mountain_pass_solve(P, one, e1);
    const OracleResult o1 = brute_saddle_oracle(P, one, e1, 2001);
    const double rel = std::abs(r1.c - o1.level) / std::abs(o1.level);

    const MeshPtr two = build_interval_mesh(1.0, 3);
    const FeField e2 = find_endpoint(P, two, default_bump(two));
    const SaddleResult r2 = mountain_pass_solve(P, two, e2);
    const OracleResult o2 = brute_saddle_oracle(P, two, e2, 201);
    const double dev = std::abs(r2.c - o2.level);
    const double t = seconds_since(t0);
    report(1, rel <= kOracleRel && dev <= o2.tolerance && t < kLimitC1,
           fmt::format("1 DOF c = {:.12g} vs oracle {:.12g} (rel {:.2e} <= {:.0e}); 2 DOFs |c - oracle| = {:.3e} <= "
                       "grid bound {:.3e}; {:.2f} s < {} s",
                       r1.c, o1.level, rel, kOracleRel, dev, o2.tolerance, t, kLimitC1));
}

void criterion2() {
    const auto t0 = std::chrono::steady_clock::now();
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 2, 2);   // 8 triangles
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    std::uniform_real_distribution<double> pd(1.05, 1.45);
    double worst = 0.0;
    int fields = 0, ties = 0;
    while (fields < 50) {
        const ProblemParams P = params(2, 1.5, pd(rng), 0.37);
        std::vector<double> dofs(sq->num_dofs());
        for (double& x : dofs) x = val(rng);
        const FeField u = FeField::from_dofs(sq, dofs);
        const GradientResult g = assemble_gradient(u, P);
        if (!g.tie_nodes.empty()) {
            ++ties;
            continue;
        }
        const auto gd = g.dofs(*sq);
        const double scale = std::max(g.max_abs(), 1e-300);
        for (std::size_t i = 0; i < dofs.size(); ++i) {
            auto a = dofs, b = dofs;
            a[i] += kFdStep;
            b[i] -= kFdStep;
            const double fd =
                (eval_J(FeField::from_dofs(sq, a), P) - eval_J(FeField::from_dofs(sq, b), P)) / (2.0 * kFdStep);
            worst = std::max(worst, std::abs(fd - gd[i]) / scale);
        }
        ++fields;
    }
    const double t = seconds_since(t0);
    report(2, worst <= kFdRel && t < kLimitC2,
           fmt::format("50 fields ({} tie draws rejected), max rel deviation {:.2e} <= {:.0e}; {:.2f} s < {} s", ties,
                       worst, kFdRel, t, kLimitC2));
}

// Criteria 3 to 6 and 9 share the sweep of criterion 3.
void criteria3to6and9(const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path out = work / "c3";
    const int code = run_command(kC3Config, out, cmd_sweep_p);
    const double t = seconds_since(t0);
    if (code == kExitError) {
        for (int id : {3, 4, 5, 6, 9}) report(id, false, fmt::format("sweep failed: {}", slurp(out / "error.json")));
        return;
    }
    const Table tab = read_table(out / "sweep_p.csv");
    const json lim = read_json(out / "limit_report.json");
    const json man = read_json(out / "manifest.json");

    // rows grouped per beta, in schedule order
    std::vector<std::vector<std::size_t>> chain;
    std::vector<double> betas;
    for (std::size_t r = 0; r < tab.rows.size(); ++r) {
        if (tab.num(r, "anchor") != 0.0) continue;
        const double b = tab.num(r, "beta");
        if (betas.empty() || betas.back() != b) {
            betas.push_back(b);
            chain.emplace_back();
        }
        chain.back().push_back(r);
    }

    // 3: c nonincreasing as p decreases; nondecreasing in beta at fixed p
    bool mono_p = true, mono_b = true;
    double worst_p = -INFINITY, worst_b = -INFINITY;
    for (const auto& ch : chain)
        for (std::size_t k = 1; k < ch.size(); ++k) {
            const double rise = tab.num(ch[k], "c") - tab.num(ch[k - 1], "c");
            worst_p = std::max(worst_p, rise);
            mono_p = mono_p && rise <= kEpsC;
        }
    for (std::size_t j = 1; j < chain.size(); ++j)
        for (std::size_t k = 0; k < chain[j].size(); ++k) {
            const double rise = tab.num(chain[j][k], "c") - tab.num(chain[j - 1][k], "c");
            worst_b = std::max(worst_b, rise);
            mono_b = mono_b && rise <= kEpsC;
        }
    report(3, mono_p && mono_b && t < kLimitC3 && chain.size() == 3,
           fmt::format("{} chains; max c(p_k) - c(p_(k-1)) = {:.3e}, max c(beta_j) - c(beta_(j-1)) = {:.3e} (eps_c {:.0e}); "
                       "{:.1f} s < {} s",
                       chain.size(), worst_p, worst_b, kEpsC, t, kLimitC3));

    // 4: gradient-energy bound and Moser bound at every record, anchors included
    bool bounds = true;
    double energy_margin = INFINITY, moser_margin = INFINITY;
    for (std::size_t r = 0; r < tab.rows.size(); ++r) {
        const double em = tab.num(r, "energy_bound") + kBoundSlack - tab.num(r, "grad_energy");
        const double mm = tab.num(r, "moser") - tab.num(r, "sup_norm");
        energy_margin = std::min(energy_margin, em);
        moser_margin = std::min(moser_margin, mm);
        bounds = bounds && em >= 0.0 && mm >= 0.0;
    }
    report(4, bounds,
           fmt::format("{} records; min (C + 1e-8 - int |grad u|^p) = {:.6g}, min (Moser bound - sup u) = {:.6g}",
                       tab.rows.size(), energy_margin, moser_margin));

    // 5: flux trend and target, pairing closed form, residuals (i) and (iv)
    bool flux_mono = true, pairing = true, resid = true, target = true;
    std::string terminal;
    double worst_div = 0.0, worst_clarke = 0.0;
    for (const auto& ch : chain) {
        for (std::size_t k = 0; k < ch.size(); ++k) {
            const std::size_t r = ch[k];
            if (k > 0) flux_mono = flux_mono && tab.num(r, "flux_sup") <= tab.num(ch[k - 1], "flux_sup");
            pairing = pairing && tab.num(r, "pairing_min") > tab.num(r, "pairing_closed") - kPairingSlack;
            worst_div = std::max(worst_div, tab.num(r, "cert_divergence"));
            worst_clarke = std::max(worst_clarke, tab.num(r, "cert_clarke"));
        }
        const std::size_t last = ch.back();
        const double fs = tab.num(last, "flux_sup");
        target = target && tab.num(last, "p") == 1.05 && fs <= kFluxTarget;
        terminal += fmt::format("{}{:.6g}", terminal.empty() ? "" : ", ", fs);
    }
    resid = worst_div <= kEpsG && worst_clarke == 0.0;
    report(5, flux_mono && target && pairing && resid,
           fmt::format("flux sup nonincreasing: {}; at p = 1.05: [{}] vs target <= {}; pairing closed form: {}; "
                       "max residual (i) {:.3e} <= {:.0e}; max residual (iv) {:.3e} == 0",
                       flux_mono ? "yes" : "no", terminal, kFluxTarget, pairing ? "yes" : "no", worst_div, kEpsG,
                       worst_clarke));

    // 6: nontriviality floor at the terminal p, branch as recorded in the manifest
    bool floor_ok = true;
    std::string branches;
    for (std::size_t j = 0; j < chain.size(); ++j) {
        const std::size_t last = chain[j].back();
        const double rho_u = tab.num(last, "rho_u");
        const double c = tab.num(last, "c");
        const double alpha = lim["sweeps"][j]["alpha"].get<double>();
        const bool on_alpha = c >= alpha;   // the continuum floor applies when the discrete level reaches it
        const std::string branch = on_alpha ? "alpha" : "half_level";
        const bool ok = on_alpha ? rho_u >= alpha - kFloorSlack : rho_u >= 0.5 * c;
        std::string recorded;
        for (const auto& s : man["stages"])
            if (s["name"] == fmt::format("nontriviality[beta={}]", betas[j])) recorded = s["detail"].get<std::string>();
        const bool logged = recorded.rfind("branch " + branch, 0) == 0;
        floor_ok = floor_ok && ok && logged;
        branches += fmt::format("{}beta {}: int rho u = {:.6g}, {} = {:.6g}, manifest '{}'", j ? "; " : "", betas[j], rho_u,
                                branch == "alpha" ? "alpha" : "c/2", on_alpha ? alpha : 0.5 * c,
                                recorded.substr(0, recorded.find(':')));
    }
    report(6, floor_ok, branches);

    // 9: an identical second run writes identical bytes
    const fs::path again = work / "c3_again";
    run_command(kC3Config, again, cmd_sweep_p);
    const std::string a = slurp(out / "sweep_p.csv"), b = slurp(again / "sweep_p.csv");
    report(9, !a.empty() && a == b,
           fmt::format("sweep_p.csv {} bytes, sha256 {} vs {}", a.size(), sha256_hex(out / "sweep_p.csv").substr(0, 16),
                       sha256_hex(again / "sweep_p.csv").substr(0, 16)));
}

void criterion7(const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<json> reps;
    for (int n : {16, 32}) {
        const fs::path out = work / fmt::format("c7_{}", n);
        const int code = run_command(fmt::format(fmt::runtime(kC7Config), n), out, cmd_sweep_beta);
        if (code == kExitError) {
            report(7, false, fmt::format("{0} x {0} sweep failed: {1}", n, slurp(out / "error.json")));
            return;
        }
        reps.push_back(read_json(out / "limit_report.json"));
    }
    const double t = seconds_since(t0);
    bool ok = t < kLimitC7;
    std::string detail;
    std::vector<double> mu;
    for (std::size_t m = 0; m < reps.size(); ++m) {
        const json& r = reps[m];
        const auto beta = r["beta"].get<std::vector<double>>();
        const auto sup = r["superlevel"].get<std::vector<double>>();
        double mu_hat = INFINITY;
        for (std::size_t j = 0; j < beta.size(); ++j)
            if (beta[j] > 0.0) mu_hat = std::min(mu_hat, sup[j]);
        mu.push_back(mu_hat);
        // L1 distances to u_0 for the positive thresholds; the tail ratios
        std::vector<double> l1;
        for (std::size_t j = 0; j + 1 < beta.size(); ++j) l1.push_back(r["lr_to_zero"][j][0].get<double>());
        std::string ratios;
        for (std::size_t j = l1.size() - 3; j < l1.size(); ++j) {
            const double q = l1[j] / l1[j - 1];
            ok = ok && q < 1.0;
            ratios += fmt::format("{}{:.4f}", ratios.empty() ? "" : ", ", q);
        }
        ok = ok && mu_hat > kMuFraction * 1.0;   // |Omega| = 1
        detail += fmt::format("{}{} x {}: L1 tail ratios [{}], mu_hat = {:.4f}", m ? "; " : "", m ? 32 : 16, m ? 32 : 16,
                              ratios, mu_hat);
    }
    const double ratio = mu[1] / mu[0];
    ok = ok && ratio >= kMuRatioLo && ratio <= kMuRatioHi;
    report(7, ok,
           fmt::format("{}; mu_hat ratio {:.4f} in [{}, {}], > {} |Omega|; {:.0f} s < {} s", detail, ratio, kMuRatioLo,
                       kMuRatioHi, kMuFraction, t, kLimitC7));
}

void criterion8() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    auto field = [&](const MeshPtr& m, bool dirichlet, double lo, double hi) {
        std::uniform_real_distribution<double> v(lo, hi);
        std::vector<double> x(m->num_nodes());
        for (double& y : x) y = v(rng);
        if (dirichlet)
            for (int b : m->boundary_nodes()) x[b] = 0.0;
        return FeField(m, x, dirichlet);
    };
    const std::vector<MeshPtr> meshes{build_rect_mesh(1.0, 1.0, 7, 5), build_rect_mesh(2.0, 0.5, 4, 9),
                                      build_interval_mesh(1.0, 11)};
    double green = 0.0;
    for (int k = 0; k < 100; ++k) {
        const MeshPtr& m = meshes[k % meshes.size()];
        std::vector<Point> z(m->num_elements());
        for (auto& v : z) v = {2.0 * d(rng), m->dim() == 1 ? 0.0 : 2.0 * d(rng)};
        green = std::max(green, green_identity_check(FluxField(m, z), field(m, k % 2 == 0, -1.0, 1.0), *m).defect);
    }

    double tv = 0.0, sl = 0.0, Fp = 0.0, F1 = 0.0, F2 = 0.0;
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 8, 8);
    for (int k = 0; k < 10; ++k) {
        const FeField u = field(sq, k % 2 == 0, -1.0, 1.0);
        tv = std::max(tv, std::abs(total_variation(u) - oracle::total_variation_ld(u)) / oracle::total_variation_ld(u));
        const FeField w = field(sq, true, 0.0, 1.0);
        const double level = 0.1 + 0.08 * k;
        sl = std::max(sl, std::abs(superlevel_measure(w, level) - oracle::superlevel_2d(w, level)));
    }
    // pointwise primitive against quadrature of f, on both sides of the threshold
    for (double q : {1.2, 1.5, 1.9})
        for (double beta : {0.0, 0.3, 1.1}) {
            const ProblemParams P = params(2, q, 1.1, beta);
            for (double t : {-2.0, -0.4, 0.1, 0.3, 0.75, 1.1, 2.5}) {
                const double lo = std::min(0.0, t), hi = std::max(0.0, t);
                auto f = [&](double s) { return f_beta(s, P); };
                // split at the jump so the quadrature never straddles it
                double ref = 0.0;
                if (beta > lo && beta < hi)
                    ref = oracle::adaptive_simpson(f, lo, beta) + oracle::adaptive_simpson(f, beta, hi);
                else
                    ref = oracle::adaptive_simpson(f, lo, hi);
                if (t < 0.0) ref = -ref;
                Fp = std::max(Fp, std::abs(F_beta(t, P) - ref) / std::max(std::abs(ref), 1.0));
            }
        }
    // element integrals: 1D against split Simpson, 2D against the divided-difference closed form
    {
        const MeshPtr line = build_interval_mesh(1.0, 2);
        const ProblemParams P = params(1, 1.5, 1.5, 1.0);
        const FeField hat = FeField::interpolate(line, [](const Point& x) { return 2.0 * (1.0 - std::abs(2.0 * x[0] - 1.0)); }, true);
        auto g = [&](double x) { return F_beta(4.0 * x, P); };
        const double ref = 2.0 * (oracle::adaptive_simpson(g, 0.0, 0.25) + oracle::adaptive_simpson(g, 0.25, 0.5));
        F1 = std::abs(eval_F_integral(hat, P) - ref) / ref;
        const ProblemParams P2 = params(2, 1.4, 1.25, 0.35);
        AssemblyOptions fine;
        fine.quad.refine = 3;
        for (int k = 0; k < 5; ++k) {
            const FeField u = field(sq, true, 0.0, 1.0);
            const double exact = oracle::F_integral_2d(u, P2.q, P2.beta);
            F2 = std::max(F2, std::abs(eval_F_integral(u, P2, fine) - exact) / exact);
        }
    }
    const double t = seconds_since(t0);
    const bool ok = green <= kGreen && tv <= kOracleExact && sl <= kOracleExact && Fp <= kOracleExact &&
                    F1 <= kOracleExact && F2 <= kOracleExact && t < kLimitC8;
    report(8, ok,
           fmt::format("Green defect {:.2e} <= {:.0e} (100 pairs); TV {:.2e}, superlevel {:.2e}, F_beta {:.2e}, "
                       "F integral 1D {:.2e}, 2D {:.2e} <= {:.0e}; {:.2f} s < {} s",
                       green, kGreen, tv, sl, Fp, F1, F2, kOracleExact, t, kLimitC8));
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "bvmp_acceptance";
    fs::create_directories(work);
    try {
        criterion1();
        criterion2();
        criterion8();
        criteria3to6and9(work);
        criterion7(work);
    } catch (const std::exception& e) {
        fmt::print("[FAIL] aborted: {}\n", e.what());
        return 1;
    }
    fmt::print("{} of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
