#include "bvmp/cli_io.hpp"

#include "bvmp/error.hpp"
#include "bvmp/kernels.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace bvmp {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_real(const std::string& v) {
    if (v.empty()) throw std::invalid_argument("empty value");
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size()) throw std::invalid_argument("not a number: '" + v + "'");
    return x;
}

int to_int(const std::string& v) {
    const double x = to_real(v);
    if (x != std::floor(x) || std::abs(x) > 1e9) throw std::invalid_argument("not an integer: '" + v + "'");
    return static_cast<int>(x);
}

std::vector<double> to_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_real(trim(item)));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

std::string list_str(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_real(v[i]);
    return s;
}

Snapshots parse_snapshots(const std::string& v) {
    if (v == "none") return Snapshots::none;
    if (v == "final") return Snapshots::final;
    if (v == "all") return Snapshots::all;
    throw std::invalid_argument("expected none, final or all (got '" + v + "')");
}

std::string to_string(Snapshots s) {
    switch (s) {
        case Snapshots::none: return "none";
        case Snapshots::final: return "final";
        case Snapshots::all: return "all";
    }
    return "final";
}

struct Key {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Parse state that only exists while reading the file.
struct Pending {
    bool have_p = false;
    bool have_beta = false;
    bool have_sched_p = false;
    int K = 7;
};
thread_local Pending* pending = nullptr;

const std::vector<Key>& keys() {
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        auto real = [&k](const char* name, auto member) {
            k.push_back({name, [member](RunConfig& c, const std::string& v) { member(c) = to_real(v); },
                         [member](const RunConfig& c) { return fmt_real(member(const_cast<RunConfig&>(c))); }});
        };
        auto integer = [&k](const char* name, auto member) {
            k.push_back({name, [member](RunConfig& c, const std::string& v) { member(c) = to_int(v); },
                         [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }});
        };

        k.push_back({"domain.kind",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "interval") c.domain = Domain::interval(c.domain.lx);
                         else if (v == "rectangle") c.domain = Domain::rectangle(c.domain.lx, c.domain.ly > 0 ? c.domain.ly : 1.0);
                         else throw std::invalid_argument("expected interval or rectangle (got '" + v + "')");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.domain.kind == DomainKind::interval ? "interval" : "rectangle");
                     }});
        real("domain.lx", [](RunConfig& c) -> double& { return c.domain.lx; });
        k.push_back({"domain.ly",
                     [](RunConfig& c, const std::string& v) { c.domain.ly = to_real(v); },
                     [](const RunConfig& c) { return fmt_real(c.domain.ly); }});
        integer("domain.nx", [](RunConfig& c) -> int& { return c.nx; });
        integer("domain.ny", [](RunConfig& c) -> int& { return c.ny; });
        integer("domain.coarse", [](RunConfig& c) -> int& { return c.coarse; });

        real("params.q", [](RunConfig& c) -> double& { return c.params.q; });
        real("params.p_bar", [](RunConfig& c) -> double& { return c.params.p_bar; });
        k.push_back({"params.p",
                     [](RunConfig& c, const std::string& v) {
                         c.params.p = to_real(v);
                         pending->have_p = true;
                     },
                     [](const RunConfig& c) { return fmt_real(c.params.p); }});
        k.push_back({"params.beta",
                     [](RunConfig& c, const std::string& v) {
                         c.params.beta = to_real(v);
                         pending->have_beta = true;
                     },
                     [](const RunConfig& c) { return fmt_real(c.params.beta); }});
        k.push_back({"params.beta0",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "auto") c.beta0.reset();
                         else c.beta0 = to_real(v);
                     },
                     [](const RunConfig& c) { return c.beta0 ? fmt_real(*c.beta0) : std::string("auto"); }});

        k.push_back({"schedule.p",
                     [](RunConfig& c, const std::string& v) {
                         c.schedule.p = to_list(v);
                         pending->have_sched_p = true;
                     },
                     [](const RunConfig& c) { return list_str(c.schedule.p); }});
        k.push_back({"schedule.K",
                     [](RunConfig&, const std::string& v) { pending->K = to_int(v); },
                     [](const RunConfig& c) { return std::to_string(c.schedule.p.size()); }});
        k.push_back({"schedule.beta",
                     [](RunConfig& c, const std::string& v) { c.schedule.beta = to_list(v); },
                     [](const RunConfig& c) { return list_str(c.schedule.beta); }});
        k.push_back({"schedule.lr",
                     [](RunConfig& c, const std::string& v) { c.schedule.lr = to_list(v); },
                     [](const RunConfig& c) { return list_str(c.schedule.lr); }});
        real("schedule.eps_c", [](RunConfig& c) -> double& { return c.schedule.eps_c; });
        real("schedule.bound_tol", [](RunConfig& c) -> double& { return c.schedule.bound_tol; });
        real("schedule.gap_tol", [](RunConfig& c) -> double& { return c.schedule.gap_tol; });
        real("schedule.eps_g_cert", [](RunConfig& c) -> double& { return c.schedule.eps_g_cert; });
        real("schedule.pairing_tol", [](RunConfig& c) -> double& { return c.schedule.pairing_tol; });
        real("schedule.flux_tol", [](RunConfig& c) -> double& { return c.schedule.flux_tol; });

        integer("solver.m", [](RunConfig& c) -> int& { return c.schedule.solver.m; });
        integer("solver.max_iter", [](RunConfig& c) -> int& { return c.schedule.solver.max_iter; });
        real("solver.step0", [](RunConfig& c) -> double& { return c.schedule.solver.step0; });
        real("solver.step_max", [](RunConfig& c) -> double& { return c.schedule.solver.step_max; });
        real("solver.armijo", [](RunConfig& c) -> double& { return c.schedule.solver.armijo; });
        real("solver.backtrack", [](RunConfig& c) -> double& { return c.schedule.solver.backtrack; });
        real("solver.eps_g", [](RunConfig& c) -> double& { return c.schedule.solver.eps_g; });
        real("solver.eps_c", [](RunConfig& c) -> double& { return c.schedule.solver.eps_c; });
        real("solver.delta_e", [](RunConfig& c) -> double& { return c.schedule.solver.delta_e; });
        real("solver.endpoint_cap", [](RunConfig& c) -> double& { return c.schedule.solver.endpoint_cap; });
        integer("solver.max_densify", [](RunConfig& c) -> int& { return c.schedule.solver.max_densify; });
        k.push_back({"solver.metric",
                     [](RunConfig& c, const std::string& v) { c.schedule.solver.metric = parse_metric(v); },
                     [](const RunConfig& c) { return to_string(c.schedule.solver.metric); }});
        real("solver.metric_eps", [](RunConfig& c) -> double& { return c.schedule.solver.metric_eps; });
        integer("solver.quad_points", [](RunConfig& c) -> int& { return c.schedule.solver.assembly.quad.points; });
        integer("solver.quad_refine", [](RunConfig& c) -> int& { return c.schedule.solver.assembly.quad.refine; });
        real("solver.gradtol", [](RunConfig& c) -> double& { return c.schedule.solver.assembly.gradtol; });
        k.push_back({"solver.exec",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "serial") c.schedule.solver.assembly.exec = Exec::serial;
                         else if (v == "parallel") c.schedule.solver.assembly.exec = Exec::parallel;
                         else throw std::invalid_argument("expected serial or parallel (got '" + v + "')");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.schedule.solver.assembly.exec == Exec::serial ? "serial" : "parallel");
                     }});

        k.push_back({"out.dir",
                     [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                     [](const RunConfig& c) { return c.out_dir.string(); }});
        k.push_back({"out.snapshots",
                     [](RunConfig& c, const std::string& v) { c.snapshots = parse_snapshots(v); },
                     [](const RunConfig& c) { return to_string(c.snapshots); }});
        integer("out.threads", [](RunConfig& c) -> int& { return c.threads; });
        return k;
    }();
    return table;
}

const Key* find_key(const std::string& name) {
    for (const Key& k : keys())
        if (name == k.name) return &k;
    return nullptr;
}

// Every module invariant, with the offending key named in front.
void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& key, const std::string& msg) {
        throw Error("config", fmt::format("{}: {}", key, msg));
    };
    if (!(c.domain.lx > 0.0)) fail("domain.lx", "must be > 0");
    if (c.domain.kind == DomainKind::rectangle && !(c.domain.ly > 0.0)) fail("domain.ly", "must be > 0");
    if (c.nx < 2) fail("domain.nx", "must be >= 2");
    if (c.domain.kind == DomainKind::rectangle && c.ny < 2) fail("domain.ny", "must be >= 2");
    if (c.coarse != 0 && c.coarse < 2) fail("domain.coarse", "must be 0 (automatic) or >= 2");
    if (c.threads < 0) fail("out.threads", "must be >= 0");
    try {
        validate(c.params);
    } catch (const Error& e) {
        const std::string m = e.what();
        auto starts = [&m](const char* prefix) { return m.rfind(prefix, 0) == 0; };
        fail(starts("q ") ? "params.q"
             : starts("p_bar ") ? "params.p_bar"
             : starts("p ") ? "params.p"
             : starts("beta ") ? "params.beta"
                               : "domain.kind",
             m);
    }
    if (c.beta0 && !(*c.beta0 > 0.0 && std::isfinite(*c.beta0))) fail("params.beta0", "must be finite and > 0");
    Schedule s = c.schedule;
    // beta0 may be resolved only at run time; check the rest against a placeholder
    double top = c.params.beta;
    for (double b : s.beta) top = std::max(top, b);
    s.beta0 = c.beta0 ? *c.beta0 : std::max(top, 1.0);
    if (c.beta0 && c.params.beta > *c.beta0)
        fail("params.beta0", fmt::format("beta0 = {} is below params.beta = {}", *c.beta0, c.params.beta));
    try {
        validate(s, c.params);
    } catch (const Error& e) {
        const std::string m = e.what();
        std::string key = "schedule";
        if (m.find("schedule.p") != std::string::npos || m.find("p-schedule") != std::string::npos) key = "schedule.p";
        else if (m.find("schedule.beta entries must lie") != std::string::npos && c.beta0) key = "params.beta0";
        else if (m.find("schedule.beta") != std::string::npos) key = "schedule.beta";
        else if (m.find("L^r") != std::string::npos) key = "schedule.lr";
        else if (m.find("tolerances") != std::string::npos) key = "schedule";
        else key = "solver";
        fail(key, m);
    }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    Pending pend;
    pending = &pend;
    struct Reset {
        ~Reset() { pending = nullptr; }
    } reset;
    std::istringstream is(text);
    std::string raw;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        const std::string body = trim(raw.substr(0, raw.find('#')));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw Error("config", fmt::format("{}:{}: expected 'key = value', got '{}'", origin, line, body));
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        const Key* k = find_key(key);
        if (!k) throw Error("config", fmt::format("{}:{}: unknown key '{}'", origin, line, key));
        if (cfg.explicit_keys.count(key))
            throw Error("config", fmt::format("{}:{}: duplicate key '{}'", origin, line, key));
        try {
            k->set(cfg, value);
        } catch (const Error& e) {
            throw Error("config", fmt::format("{}:{}: {}: {}", origin, line, key, e.what()));
        } catch (const std::exception& e) {
            throw Error("config", fmt::format("{}:{}: {}: {}", origin, line, key, e.what()));
        }
        cfg.explicit_keys[key] = value;
    }
    cfg.params.dim = cfg.domain.dim();
    if (cfg.domain.kind == DomainKind::interval) {
        cfg.domain.ly = 0.0;
        cfg.ny = 0;
    }
    if (!pend.have_sched_p) {
        try {
            cfg.schedule.p = default_p_schedule(pend.K);
        } catch (const Error& e) {
            throw Error("config", fmt::format("schedule.K: {}", e.what()));
        }
        // the default schedule is capped at p_bar
        std::erase_if(cfg.schedule.p, [&](double p) { return p > cfg.params.p_bar; });
    }
    if (!pend.have_beta && !cfg.schedule.beta.empty()) cfg.params.beta = cfg.schedule.beta.front();
    if (cfg.schedule.beta.empty()) cfg.schedule.beta = {cfg.params.beta};
    if (!pend.have_p) cfg.params.p = cfg.params.p_bar;
    if (cfg.beta0) cfg.schedule.beta0 = *cfg.beta0;
    validate_config(cfg);
    return cfg;
}

RunConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("config", fmt::format("cannot open config file '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

std::string config_echo(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> lines;
    for (const Key& k : keys()) lines.emplace_back(k.name, k.get(cfg));
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& [k, v] : lines) out += fmt::format("{} = {}\n", k, v);
    return out;
}

std::string fmt_real(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", x);
}

std::string sha256_hex(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", fmt::format("cannot read '{}'", path.string()));
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

// ---------------------------------------------------------------- tables

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("io", fmt::format("cannot write '{}'", path.string()));
    return os;
}

void header(std::ostream& os, const char* kind, const std::vector<std::string>& cols) {
    std::string joined;
    for (std::size_t i = 0; i < cols.size(); ++i) joined += (i ? "," : "") + cols[i];
    os << fmt::format("# bvmp {} {} columns={}\n{}\n", kVersion, kind, joined, joined);
}

// Data rows of a CSV written by this module, split on commas.
std::vector<std::vector<std::string>> read_rows(const fs::path& path, std::size_t ncols) {
    std::ifstream in(path);
    if (!in) throw Error("io", fmt::format("cannot read '{}'", path.string()));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    int lineno = 0;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!seen_header) {
            seen_header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != ncols)
            throw Error("io", fmt::format("{}:{}: expected {} columns, got {}", path.string(), lineno, ncols, cells.size()));
        rows.push_back(std::move(cells));
    }
    return rows;
}

double cell_real(const std::string& s, const fs::path& path) {
    try {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        return to_real(s);
    } catch (const std::exception& e) {
        throw Error("io", fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::size_t cell_index(const std::string& s, std::size_t expected, const fs::path& path) {
    const double x = cell_real(s, path);
    if (x != static_cast<double>(expected))
        throw Error("io", fmt::format("{}: row index {} out of order (expected {})", path.string(), s, expected));
    return expected;
}

}  // namespace

void write_field_csv(const fs::path& path, const FeField& u) {
    auto os = open_out(path);
    header(os, "field", {"node", "x", "y", "value", "value_lo"});
    const Mesh& m = u.mesh();
    const auto lo = u.low();
    for (std::size_t i = 0; i < m.num_nodes(); ++i) {
        const Point& x = m.nodes()[i];
        os << fmt::format("{},{},{},{},{}\n", i, fmt_real(x[0]), fmt_real(x[1]), fmt_real(u[i]),
                          fmt_real(lo.empty() ? 0.0 : lo[i]));
    }
}

FeField read_field_csv(const fs::path& path, const MeshPtr& mesh) {
    const auto rows = read_rows(path, 5);
    if (rows.size() != mesh->num_nodes())
        throw Error("io", fmt::format("{}: {} rows for a mesh with {} nodes", path.string(), rows.size(), mesh->num_nodes()));
    std::vector<double> hi(rows.size()), lo(rows.size());
    bool any_lo = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        cell_index(rows[i][0], i, path);
        hi[i] = cell_real(rows[i][3], path);
        lo[i] = cell_real(rows[i][4], path);
        any_lo = any_lo || lo[i] != 0.0;
    }
    bool dirichlet = true;
    for (int b : mesh->boundary_nodes()) dirichlet = dirichlet && hi[b] == 0.0 && lo[b] == 0.0;
    if (any_lo) return FeField(mesh, std::move(hi), std::move(lo), dirichlet);
    return FeField(mesh, std::move(hi), dirichlet);
}

void write_flux_csv(const fs::path& path, const FluxField& z) {
    auto os = open_out(path);
    header(os, "flux", {"element", "cx", "cy", "zx", "zy"});
    const Mesh& m = z.mesh();
    for (std::size_t e = 0; e < m.num_elements(); ++e) {
        const Point c = m.centroid(e);
        os << fmt::format("{},{},{},{},{}\n", e, fmt_real(c[0]), fmt_real(c[1]), fmt_real(z[e][0]), fmt_real(z[e][1]));
    }
}

FluxField read_flux_csv(const fs::path& path, const MeshPtr& mesh) {
    const auto rows = read_rows(path, 5);
    if (rows.size() != mesh->num_elements())
        throw Error("io", fmt::format("{}: {} rows for a mesh with {} elements", path.string(), rows.size(),
                                      mesh->num_elements()));
    std::vector<Point> v(rows.size());
    for (std::size_t e = 0; e < rows.size(); ++e) {
        cell_index(rows[e][0], e, path);
        v[e] = {cell_real(rows[e][3], path), cell_real(rows[e][4], path)};
    }
    return FluxField(mesh, std::move(v));
}

void write_rho_csv(const fs::path& path, const SelectionField& rho) {
    auto os = open_out(path);
    header(os, "rho", {"node", "x", "y", "u", "rho"});
    const Mesh& m = rho.mesh();
    for (std::size_t i = 0; i < m.num_nodes(); ++i) {
        const Point& x = m.nodes()[i];
        os << fmt::format("{},{},{},{},{}\n", i, fmt_real(x[0]), fmt_real(x[1]), fmt_real(rho.nodal_u()[i]),
                          fmt_real(rho.nodal()[i]));
    }
}

std::vector<double> read_rho_csv(const fs::path& path, std::size_t num_nodes) {
    const auto rows = read_rows(path, 5);
    if (rows.size() != num_nodes)
        throw Error("io", fmt::format("{}: {} rows for {} nodes", path.string(), rows.size(), num_nodes));
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        cell_index(rows[i][0], i, path);
        out[i] = cell_real(rows[i][4], path);
    }
    return out;
}

void write_sweep_p_csv(const fs::path& path, const std::vector<RunRecord>& records, const std::vector<double>& lr) {
    auto os = open_out(path);
    std::vector<std::string> cols = {"p", "beta", "anchor", "c", "grad_energy", "energy_bound", "sup_norm", "moser",
                                     "tv", "bv", "flux_sup", "max_normal_trace", "boundary_sign", "pairing_min",
                                     "pairing_max", "pairing_closed", "superlevel", "rho_u", "grad_residual",
                                     "lambda_proxy", "alpha_h", "iterations", "segments"};
    for (double r : lr) cols.push_back(fmt::format("lr_prev_{}", fmt_real(r)));
    for (const char* c : {"cert_divergence", "cert_pairing_gap", "cert_flux_excess", "cert_clarke", "cert_pass"})
        cols.push_back(c);
    header(os, "sweep_p", cols);
    for (const RunRecord& r : records) {
        std::string row = fmt::format("{},{},{}", fmt_real(r.p), fmt_real(r.beta), r.anchor ? 1 : 0);
        for (double v : {r.c, r.grad_energy, r.energy_bound, r.sup_norm, r.moser, r.tv, r.bv, r.flux_sup,
                         r.max_normal_trace, r.boundary_sign, r.pairing_min, r.pairing_max, r.pairing_closed,
                         r.superlevel, r.rho_u, r.grad_residual, r.lambda_proxy, r.alpha_h})
            row += "," + fmt_real(v);
        row += fmt::format(",{},{}", r.iterations, r.segments);
        for (std::size_t k = 0; k < lr.size(); ++k)
            row += "," + fmt_real(k < r.lr_prev.size() ? r.lr_prev[k] : std::numeric_limits<double>::quiet_NaN());
        row += fmt::format(",{},{},{},{},{}{}{}{}", fmt_real(r.cert.divergence), fmt_real(r.cert.pairing_gap),
                           fmt_real(r.cert.flux_excess), fmt_real(r.cert.clarke_violation), int(r.cert.pass[0]),
                           int(r.cert.pass[1]), int(r.cert.pass[2]), int(r.cert.pass[3]));
        os << row << '\n';
    }
}

void write_sweep_beta_csv(const fs::path& path, const BetaSweepResult& r, const Schedule& s) {
    auto os = open_out(path);
    std::vector<std::string> cols = {"beta", "p", "c", "superlevel", "I_bv", "nontrivial_rhs", "rho_u", "floor_branch"};
    for (double q : s.lr) cols.push_back(fmt::format("lr_to_zero_{}", fmt_real(q)));
    header(os, "sweep_beta", cols);
    for (std::size_t j = 0; j < r.sweeps.size(); ++j) {
        const RunRecord& last = r.sweeps[j].records.back();
        std::string row = fmt::format("{},{},{},{},{},{},{},{}", fmt_real(r.sweeps[j].beta), fmt_real(last.p),
                                      fmt_real(last.c), fmt_real(r.superlevel[j]), fmt_real(r.I_bv[j]),
                                      fmt_real(r.nontrivial_rhs[j]), fmt_real(last.rho_u), r.sweeps[j].floor_branch);
        for (double d : r.lr_to_zero[j]) row += "," + fmt_real(d);
        os << row << '\n';
    }
}

// ---------------------------------------------------------------- manifest

namespace {

std::string now_utc() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

void write_json(const fs::path& path, const json& j) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
}

json echo_json(const std::string& echo) {
    json j = json::object();
    std::istringstream is(echo);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

}  // namespace

RunManifest::RunManifest(std::string command, const RunConfig& cfg)
    : command_(std::move(command)), echo_(config_echo(cfg)), started_(now_utc()), out_dir_(cfg.out_dir) {}

void RunManifest::stage(std::string name, std::string status, std::string detail) {
    stages_.push_back({std::move(name), std::move(status), std::move(detail)});
}

void RunManifest::add_file(const fs::path& relative) {
    const std::string rel = relative.generic_string();
    const std::string hash = sha256_hex(out_dir_ / relative);
    const auto it = std::find(files_.begin(), files_.end(), rel);
    if (it != files_.end()) {
        hashes_[it - files_.begin()] = hash;
        return;
    }
    files_.push_back(rel);
    hashes_.push_back(hash);
}

void RunManifest::write(const fs::path& out_dir) {
    json j;
    j["artifact"] = "bvmp";
    j["version"] = kVersion;
    j["command"] = command_;
    j["started"] = started_;
    j["finished"] = now_utc();
    j["config"] = echo_json(echo_);
    json stages = json::array();
    for (const StageStatus& s : stages_) stages.push_back({{"name", s.name}, {"status", s.status}, {"detail", s.detail}});
    j["stages"] = stages;
    json files = json::array();
    for (std::size_t i = 0; i < files_.size(); ++i) {
        const auto size = fs::file_size(out_dir / files_[i]);
        files.push_back({{"path", files_[i]}, {"sha256", hashes_[i]}, {"bytes", size}});
    }
    j["files"] = files;
    write_json(out_dir / "manifest.json", j);
}

void write_error_record(const fs::path& out_dir, const std::string& stage, const std::string& code,
                        const std::string& message) {
    fs::create_directories(out_dir);
    write_json(out_dir / "error.json", {{"stage", stage}, {"code", code}, {"message", message}});
}

// ---------------------------------------------------------------- commands

namespace {

json certificate_json(const Certificate& c, const CertificateTolerances& tol) {
    return {{"divergence", {{"value", c.divergence}, {"tolerance", tol.divergence}, {"pass", c.pass[0]}}},
            {"pairing_gap", {{"value", c.pairing_gap}, {"tolerance", tol.pairing}, {"pass", c.pass[1]}}},
            {"flux_excess", {{"value", c.flux_excess}, {"tolerance", tol.flux}, {"pass", c.pass[2]}}},
            {"clarke_violation",
             {{"value", c.clarke_violation}, {"pass", c.pass[3]}, {"nodes", c.clarke_nodes}, {"samples", c.clarke_samples}}},
            {"all_pass", c.all_pass()}};
}

CertificateTolerances tolerances(const Schedule& s) {
    CertificateTolerances t;
    t.divergence = s.eps_g_cert > 0.0 ? s.eps_g_cert : s.solver.eps_g;
    t.pairing = s.pairing_tol;
    t.flux = s.flux_tol;
    return t;
}

json checks_json(const std::vector<Check>& checks) {
    json a = json::array();
    for (const Check& c : checks)
        a.push_back({{"name", c.name}, {"ok", c.ok}, {"gating", c.gating}, {"detail", c.detail}});
    return a;
}

void write_trace_csv(const fs::path& path, const std::vector<RunRecord>& records) {
    auto os = open_out(path);
    header(os, "trace", {"p", "beta", "iteration", "level", "residual", "step", "peak", "segments"});
    for (const RunRecord& r : records)
        for (const TraceRow& t : r.trace)
            os << fmt::format("{},{},{},{},{},{},{},{}\n", fmt_real(r.p), fmt_real(r.beta), t.iteration,
                              fmt_real(t.level), fmt_real(t.residual), fmt_real(t.step), t.peak, t.segments);
}

// Shared state of one command run: output directory, manifest, mesh.
struct Run {
    const RunConfig& cfg;
    RunManifest manifest;
    MeshPtr mesh;
    std::string stage = "setup";

    Run(const char* command, const RunConfig& c) : cfg(c), manifest(command, c) {
        set_threads(cfg.threads);
        fs::create_directories(cfg.out_dir);
    }

    fs::path at(const std::string& name) const { return cfg.out_dir / name; }

    void file(const std::string& name) { manifest.add_file(name); }

    void build_mesh_file() {
        stage = "mesh";
        mesh = build_mesh(cfg.domain, cfg.nx, cfg.ny);
        auto os = open_out(at("mesh.txt"));
        write_mesh(os, *mesh);
        os.close();
        file("mesh.txt");
        manifest.stage("mesh", "ok", fmt::format("{} nodes, {} elements", mesh->num_nodes(), mesh->num_elements()));
    }

    double beta0() {
        stage = "beta0";
        double top = cfg.params.beta;
        for (double b : cfg.schedule.beta) top = std::max(top, b);
        double b0;
        std::string how;
        if (cfg.beta0) {
            b0 = *cfg.beta0;
            how = "configured";
        } else {
            const int n = cfg.coarse > 0 ? cfg.coarse : std::max(cfg.nx / 2, 2);
            const int m = cfg.coarse > 0 ? cfg.coarse : std::max(cfg.ny / 2, 2);
            b0 = default_beta0(cfg.params, build_mesh(cfg.domain, n, m), cfg.schedule.solver);
            how = fmt::format("0.5 * peak of the beta = 0 solution on {} subdivisions", n);
        }
        if (!(b0 >= top))
            throw Error("config", fmt::format("params.beta0: beta0 = {} is below the largest beta {}", fmt_real(b0), fmt_real(top)));
        manifest.stage("beta0", "ok", fmt::format("beta0 = {} ({})", fmt_real(b0), how));
        return b0;
    }

    // Writes the manifest and, for a failure, error.json; returns the exit code.
    int finish(int code) {
        manifest.write(cfg.out_dir);
        return code;
    }

    int fail(const std::string& code, const std::string& message) {
        manifest.stage(stage, "error", fmt::format("{}: {}", code, message));
        write_error_record(cfg.out_dir, stage, code, message);
        manifest.add_file("error.json");
        return finish(kExitError);
    }
};

void write_snapshot_meta(Run& run, const std::string& name, const ProblemParams& P) {
    write_json(run.at(name), {{"p", P.p}, {"beta", P.beta}, {"q", P.q}, {"p_bar", P.p_bar}, {"dim", P.dim}});
    run.file(name);
}

void write_triple(Run& run, const std::string& suffix, const FeField& u, const FluxField& z, const SelectionField& rho) {
    write_field_csv(run.at("field_" + suffix + ".csv"), u);
    run.file("field_" + suffix + ".csv");
    write_flux_csv(run.at("flux_" + suffix + ".csv"), z);
    run.file("flux_" + suffix + ".csv");
    write_rho_csv(run.at("rho_" + suffix + ".csv"), rho);
    run.file("rho_" + suffix + ".csv");
}

// The terminal triple under the fixed names read by verify.
void write_final_triple(Run& run, const FeField& u, const FluxField& z, const SelectionField& rho, const ProblemParams& P) {
    write_field_csv(run.at("field_u.csv"), u);
    run.file("field_u.csv");
    write_flux_csv(run.at("flux_z.csv"), z);
    run.file("flux_z.csv");
    write_rho_csv(run.at("rho.csv"), rho);
    run.file("rho.csv");
    write_snapshot_meta(run, "snapshot.json", P);
}

json sweep_json(const SweepResult& r, const CertificateTolerances& tol) {
    json recs = json::array();
    for (const RunRecord& rec : r.records)
        recs.push_back({{"p", rec.p}, {"beta", rec.beta}, {"anchor", rec.anchor}, {"c", rec.c},
                        {"certificate", certificate_json(rec.cert, tol)}});
    return {{"beta", r.beta}, {"C", r.C}, {"alpha", r.alpha}, {"floor_branch", r.floor_branch},
            {"checks", checks_json(r.checks)}, {"records", recs}};
}

void sweep_outputs(Run& run, const SweepResult& r, const std::string& tag) {
    const Schedule& s = run.cfg.schedule;
    if (run.cfg.snapshots == Snapshots::all) {
        for (std::size_t k = 0; k < r.records.size(); ++k) {
            const ProblemParams Pk = run.cfg.params.with_beta(r.beta).with_p(r.records[k].p);
            const FeField& u = r.fields[k];
            write_triple(run, fmt::format("{}p{}", tag, k), u, extract_flux(u, Pk.p),
                         selection_rho(u, Pk, SelectionRule::pointwise, s.solver.assembly.quad));
        }
    }
    for (const Check& c : r.checks)
        if (c.name == "nontriviality")
            run.manifest.stage(fmt::format("nontriviality[beta={}]", r.beta), c.ok ? "ok" : "checks_failed",
                               fmt::format("branch {}: {}", r.floor_branch, c.detail));
}

}  // namespace

int cmd_solve(const RunConfig& cfg) {
    Run run("solve", cfg);
    try {
        run.build_mesh_file();
        const double b0 = run.beta0();
        const ProblemParams& P = cfg.params;
        run.stage = "endpoint";
        const FeField e = find_endpoint(P.with_beta(b0), run.mesh, default_bump(run.mesh), cfg.schedule.solver);
        run.manifest.stage("endpoint", "ok", fmt::format("max e = {}", fmt_real(e.max_value())));
        run.stage = "solve";
        const SaddleResult r = mountain_pass_solve(P, run.mesh, e, cfg.schedule.solver);
        run.manifest.stage("solve", "ok", fmt::format("c = {}, {} iterations", fmt_real(r.c), r.iterations));

        run.stage = "certificate";
        const FluxField z = extract_flux(r.u, P.p);
        const SelectionField rho = selection_rho(r.u, P, SelectionRule::pointwise, cfg.schedule.solver.assembly.quad);
        const CertificateTolerances tol = tolerances(cfg.schedule);
        const Certificate cert = certify_triple(r.u, z, rho, P, tol);
        write_json(run.at("certificate.json"), certificate_json(cert, tol));
        run.file("certificate.json");
        run.manifest.stage("certificate", cert.all_pass() ? "ok" : "checks_failed",
                           fmt::format("pass {}{}{}{}", int(cert.pass[0]), int(cert.pass[1]), int(cert.pass[2]),
                                       int(cert.pass[3])));

        run.stage = "export";
        const GeometryConstants g = eval_mountain_geometry(P, run.mesh->measure());
        const double Ie = eval_I(e, P, cfg.schedule.solver.assembly).I;
        write_json(run.at("solve.json"),
                   {{"p", P.p}, {"beta", P.beta}, {"beta0", b0}, {"c", r.c}, {"grad_residual", r.grad_residual},
                    {"iterations", r.iterations}, {"converged", r.converged}, {"lambda_proxy", r.lambda_proxy},
                    {"alpha_h", r.alpha_h}, {"ring_radius", r.ring_radius}, {"segments", r.segments},
                    {"densifications", r.densifications}, {"tie_nudges", r.tie_nudges},
                    {"geometry", {{"C", g.C_geom}, {"r", g.r}, {"alpha", g.alpha}, {"theta", g.theta}, {"model", g.model}}},
                    {"endpoint", {{"max", e.max_value()}, {"I", Ie}, {"p_over_p_minus_1", P.p / (P.p - 1.0)}}}});
        run.file("solve.json");
        if (cfg.snapshots != Snapshots::none) write_final_triple(run, r.u, z, rho, P);
        std::vector<RunRecord> trace_only(1);
        trace_only[0].p = P.p;
        trace_only[0].beta = P.beta;
        trace_only[0].trace = r.trace;
        write_trace_csv(run.at("trace.csv"), trace_only);
        run.file("trace.csv");
        return run.finish(kExitOk);
    } catch (const Error& e) {
        return run.fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return run.fail("internal", e.what());
    }
}

int cmd_sweep_p(const RunConfig& cfg) {
    Run run("sweep-p", cfg);
    try {
        run.build_mesh_file();
        Schedule s = cfg.schedule;
        s.beta0 = run.beta0();
        run.stage = "endpoint";
        const FeField e = sweep_endpoint(cfg.params, run.mesh, s);
        run.manifest.stage("endpoint", "ok", fmt::format("max e = {}", fmt_real(e.max_value())));
        run.stage = "sweep";
        // one chain per beta, run in schedule order; the first is the one the final triple comes from
        std::vector<SweepResult> chains;
        std::vector<RunRecord> all;
        for (double beta : s.beta) {
            try {
                chains.push_back(p_sweep(cfg.params, beta, run.mesh, e, s));
            } catch (const SweepError& err) {
                all.insert(all.end(), err.partial().records.begin(), err.partial().records.end());
                write_sweep_p_csv(run.at("sweep_p.csv"), all, s.lr);
                run.file("sweep_p.csv");
                write_trace_csv(run.at("trace.csv"), all);
                run.file("trace.csv");
                return run.fail(err.code(), err.what());
            }
            all.insert(all.end(), chains.back().records.begin(), chains.back().records.end());
        }
        run.manifest.stage("sweep", "ok", fmt::format("{} records", all.size()));
        run.stage = "export";
        write_sweep_p_csv(run.at("sweep_p.csv"), all, s.lr);
        run.file("sweep_p.csv");
        write_trace_csv(run.at("trace.csv"), all);
        run.file("trace.csv");

        // levels grow with the threshold at every shared p
        std::vector<Check> cross;
        for (std::size_t j = 1; j < chains.size(); ++j)
            for (const RunRecord& lo : chains[j].records)
                for (const RunRecord& hi : chains[j - 1].records)
                    if (hi.p == lo.p && !hi.anchor && !lo.anchor)
                        cross.push_back({fmt::format("beta_order[p={},beta={}]", lo.p, lo.beta),
                                         lo.c <= hi.c + s.eps_c,
                                         fmt::format("c = {:.17g} at beta = {:.17g}, {:.17g} at beta = {:.17g}", lo.c,
                                                     lo.beta, hi.c, hi.beta)});
        bool ok = std::all_of(cross.begin(), cross.end(), [](const Check& c) { return c.ok; });
        json sweeps = json::array();
        json certs = json::array();
        for (std::size_t j = 0; j < chains.size(); ++j) {
            const json sj = sweep_json(chains[j], tolerances(s));
            for (const auto& rec : sj["records"]) certs.push_back(rec);
            sweeps.push_back(sj);
            ok = ok && chains[j].all_ok();
            sweep_outputs(run, chains[j], chains.size() == 1 ? "" : fmt::format("b{}", j));
        }
        write_json(run.at("certificate.json"), certs);
        run.file("certificate.json");
        write_json(run.at("limit_report.json"),
                   {{"beta", s.beta}, {"beta0", s.beta0}, {"checks", checks_json(cross)}, {"sweeps", sweeps}});
        run.file("limit_report.json");
        if (cfg.snapshots != Snapshots::none) {
            const SweepResult& first = chains.front();
            write_final_triple(run, *first.u, *first.z, *first.rho,
                               cfg.params.with_beta(first.beta).with_p(first.records.back().p));
            for (std::size_t j = 1; j < chains.size(); ++j)
                write_triple(run, fmt::format("b{}", j), *chains[j].u, *chains[j].z, *chains[j].rho);
        }
        run.manifest.stage("checks", ok ? "ok" : "checks_failed", fmt::format("{} chains", chains.size()));
        return run.finish(ok ? kExitOk : kExitChecks);
    } catch (const Error& e) {
        return run.fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return run.fail("internal", e.what());
    }
}

int cmd_sweep_beta(const RunConfig& cfg) {
    Run run("sweep-beta", cfg);
    try {
        run.build_mesh_file();
        Schedule s = cfg.schedule;
        s.beta0 = run.beta0();
        run.stage = "sweep";
        BetaSweepResult r;
        try {
            r = beta_sweep(cfg.params, run.mesh, s);
        } catch (const SweepError& err) {
            write_sweep_p_csv(run.at("sweep_p.csv"), err.partial().records, s.lr);
            run.file("sweep_p.csv");
            return run.fail(err.code(), err.what());
        }
        run.manifest.stage("sweep", "ok", fmt::format("{} chains", r.sweeps.size()));
        run.stage = "export";
        std::vector<RunRecord> all;
        for (const SweepResult& sw : r.sweeps) all.insert(all.end(), sw.records.begin(), sw.records.end());
        write_sweep_p_csv(run.at("sweep_p.csv"), all, s.lr);
        run.file("sweep_p.csv");
        write_sweep_beta_csv(run.at("sweep_beta.csv"), r, s);
        run.file("sweep_beta.csv");
        write_trace_csv(run.at("trace.csv"), all);
        run.file("trace.csv");

        json sweeps = json::array();
        json certs = json::array();
        bool chains_ok = true;
        for (std::size_t j = 0; j < r.sweeps.size(); ++j) {
            const json sj = sweep_json(r.sweeps[j], tolerances(s));
            for (const auto& rec : sj["records"]) certs.push_back(rec);
            sweeps.push_back(sj);
            chains_ok = chains_ok && r.sweeps[j].all_ok();
            sweep_outputs(run, r.sweeps[j], fmt::format("b{}", j));
            if (cfg.snapshots != Snapshots::none) {
                const SweepResult& sw = r.sweeps[j];
                write_triple(run, fmt::format("b{}", j), *sw.u, *sw.z, *sw.rho);
            }
        }
        write_json(run.at("certificate.json"), certs);
        run.file("certificate.json");
        write_json(run.at("limit_report.json"),
                   {{"beta", s.beta}, {"beta0", s.beta0}, {"alpha", r.alpha}, {"mu_hat", r.mu_hat},
                    {"superlevel", r.superlevel}, {"I_bv", r.I_bv}, {"nontrivial_rhs", r.nontrivial_rhs},
                    {"lr", s.lr}, {"lr_to_zero", r.lr_to_zero}, {"checks", checks_json(r.checks)}, {"sweeps", sweeps}});
        run.file("limit_report.json");
        if (cfg.snapshots != Snapshots::none) {
            const SweepResult& last = r.sweeps.back();
            write_final_triple(run, *last.u, *last.z, *last.rho,
                               cfg.params.with_beta(last.beta).with_p(last.records.back().p));
        }
        const bool ok = chains_ok && r.all_ok();
        run.manifest.stage("checks", ok ? "ok" : "checks_failed", fmt::format("{} limit checks", r.checks.size()));
        return run.finish(ok ? kExitOk : kExitChecks);
    } catch (const Error& e) {
        return run.fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return run.fail("internal", e.what());
    }
}

int cmd_verify(const RunConfig& cfg, const fs::path& snapshot) {
    Run run("verify", cfg);
    try {
        run.stage = "load";
        std::ifstream mesh_in(snapshot / "mesh.txt");
        if (!mesh_in) throw Error("io", fmt::format("no mesh.txt in '{}'", snapshot.string()));
        run.mesh = read_mesh(mesh_in);
        ProblemParams P = cfg.params;
        if (fs::exists(snapshot / "snapshot.json")) {
            std::ifstream in(snapshot / "snapshot.json");
            const json meta = json::parse(in);
            P.p = meta.at("p").get<double>();
            P.beta = meta.at("beta").get<double>();
            P.q = meta.at("q").get<double>();
            P.p_bar = meta.at("p_bar").get<double>();
            P.dim = meta.at("dim").get<int>();
        }
        const FeField u = read_field_csv(snapshot / "field_u.csv", run.mesh);
        const FluxField z = read_flux_csv(snapshot / "flux_z.csv", run.mesh);
        const std::vector<double> stored = read_rho_csv(snapshot / "rho.csv", run.mesh->num_nodes());
        // stored nodal rho wins; the load vector is rebuilt from u
        SelectionField rho = selection_rho(u, P, SelectionRule::pointwise, cfg.schedule.solver.assembly.quad);
        for (std::size_t i = 0; i < stored.size(); ++i) rho.set_nodal(i, stored[i]);
        run.manifest.stage("load", "ok", fmt::format("p = {}, beta = {}", fmt_real(P.p), fmt_real(P.beta)));

        run.stage = "certificate";
        const CertificateTolerances tol = tolerances(cfg.schedule);
        const Certificate cert = certify_triple(u, z, rho, P, tol);
        write_json(run.at("certificate.json"), certificate_json(cert, tol));
        run.file("certificate.json");
        run.manifest.stage("certificate", cert.all_pass() ? "ok" : "checks_failed",
                           fmt::format("pass {}{}{}{}", int(cert.pass[0]), int(cert.pass[1]), int(cert.pass[2]),
                                       int(cert.pass[3])));
        return run.finish(cert.all_pass() ? kExitOk : kExitChecks);
    } catch (const Error& e) {
        return run.fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return run.fail("internal", e.what());
    }
}

int cmd_export(const RunConfig& cfg, const fs::path& from) {
    Run run("export", cfg);
    try {
        run.stage = "load";
        std::ifstream in(from / "manifest.json");
        if (!in) throw Error("io", fmt::format("no manifest.json in '{}'", from.string()));
        const json src = json::parse(in);
        MeshPtr mesh;
        if (fs::exists(from / "mesh.txt")) {
            std::ifstream mi(from / "mesh.txt");
            mesh = read_mesh(mi);
        }
        int changed = 0;
        for (const json& f : src.at("files")) {
            const std::string rel = f.at("path").get<std::string>();
            if (rel == "manifest.json") continue;
            run.stage = "file:" + rel;
            const fs::path source = from / rel;
            const std::string want = f.at("sha256").get<std::string>();
            if (sha256_hex(source) != want)
                throw Error("io", fmt::format("'{}' does not match its recorded hash", rel));
            const fs::path target = run.at(rel);
            const std::string name = fs::path(rel).filename().string();
            const bool field = name.rfind("field_", 0) == 0 && name.ends_with(".csv");
            const bool flux = name.rfind("flux_", 0) == 0 && name.ends_with(".csv");
            const bool rho = name.rfind("rho", 0) == 0 && name.ends_with(".csv");
            if ((field || flux || rho) && !mesh) throw Error("io", "snapshot tables need mesh.txt");
            if (field) {
                write_field_csv(target, read_field_csv(source, mesh));
            } else if (flux) {
                write_flux_csv(target, read_flux_csv(source, mesh));
            } else if (rho) {
                const auto rows = read_rows(source, 5);
                auto os = open_out(target);
                header(os, "rho", {"node", "x", "y", "u", "rho"});
                for (std::size_t i = 0; i < rows.size(); ++i)
                    os << fmt::format("{},{},{},{},{}\n", i, fmt_real(cell_real(rows[i][1], source)),
                                      fmt_real(cell_real(rows[i][2], source)), fmt_real(cell_real(rows[i][3], source)),
                                      fmt_real(cell_real(rows[i][4], source)));
            } else if (name == "mesh.txt") {
                auto os = open_out(target);
                write_mesh(os, *mesh);
            } else {
                fs::copy_file(source, target, fs::copy_options::overwrite_existing);
            }
            run.file(rel);
            if (sha256_hex(target) != want) ++changed;
        }
        run.stage = "export";
        run.manifest.stage("export", changed == 0 ? "ok" : "checks_failed",
                           fmt::format("{} files re-emitted, {} differ from the source", run.manifest.files().size(), changed));
        return run.finish(changed == 0 ? kExitOk : kExitChecks);
    } catch (const Error& e) {
        return run.fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return run.fail("internal", e.what());
    }
}

}  // namespace bvmp
