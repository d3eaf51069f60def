#include "bvmp/bv.hpp"

#include "bvmp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bvmp {

namespace {

void same_mesh(const Mesh& a, const Mesh& b, const char* what) {
    if (&a != &b) throw Error("invalid_argument", std::string(what) + " must live on the same mesh");
}

}  // namespace

double total_variation(const FeField& u, Exec exec) { return kernels::grad_norm_sum(u, exec); }

double bv_norm(const FeField& u, Exec exec) {
    return total_variation(u, exec) + boundary_trace_integral(u.mesh(), u);
}

FluxField extract_flux(const FeField& u, double p) {
    if (!(p > 1.0)) throw Error("invalid_argument", "extract_flux requires p > 1");
    const Mesh& mesh = u.mesh();
    std::vector<Point> z(mesh.num_elements(), Point{0.0, 0.0});
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const Point g = u.gradient(e);
        const double a = norm(g);
        if (a == 0.0) continue;
        const double s = std::pow(a, p - 2.0);
        z[e] = {s * g[0], s * g[1]};
    }
    return FluxField(u.mesh_ptr(), std::move(z));
}

double flux_sup_norm(const FluxField& z) {
    double m = 0.0;
    for (const Point& v : z.vectors()) m = std::max(m, norm(v));
    return m;
}

PairingReport pairing(const FluxField& z, const FeField& u, const FeField* w, std::optional<double> eps_act) {
    same_mesh(z.mesh(), u.mesh(), "flux and field");
    if (w) same_mesh(w->mesh(), u.mesh(), "weight and field");
    const Mesh& mesh = u.mesh();
    const int nv = mesh.nodes_per_element();
    std::vector<Point> grads(mesh.num_elements());
    double gmax = 0.0;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        grads[e] = u.gradient(e);
        gmax = std::max(gmax, norm(grads[e]));
    }
    PairingReport r;
    r.eps_act = eps_act.value_or(1e-8 * gmax);
    r.min_ratio = std::numeric_limits<double>::infinity();
    r.max_ratio = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const double area = mesh.element_measure(e);
        double wbar = 1.0;
        if (w) {
            wbar = 0.0;
            for (int k = 0; k < nv; ++k) wbar += (*w)[mesh.elements()[e][k]];
            wbar /= nv;
        }
        const double zg = dot(z[e], grads[e]);
        const double a = norm(grads[e]);
        r.pairing_total += wbar * zg * area;
        r.tv_total += a * area;
        if (a > r.eps_act) {
            const double ratio = zg / a;
            r.active.push_back(static_cast<int>(e));
            r.ratios.push_back(ratio);
            r.min_ratio = std::min(r.min_ratio, ratio);
            r.max_ratio = std::max(r.max_ratio, ratio);
            r.active_measure += area;
        }
    }
    if (r.active.empty()) r.min_ratio = r.max_ratio = 0.0;
    return r;
}

DivergenceResidual weak_divergence_residual(const FluxField& z, const SelectionField& rho, const Mesh& mesh) {
    same_mesh(z.mesh(), mesh, "flux and mesh");
    same_mesh(rho.mesh(), mesh, "selection and mesh");
    DivergenceResidual r;
    r.nodal.assign(mesh.num_nodes(), 0.0);
    const int nv = mesh.nodes_per_element();
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const auto& bg = mesh.basis_gradients(e);
        const double area = mesh.element_measure(e);
        for (int k = 0; k < nv; ++k) r.nodal[mesh.elements()[e][k]] += area * dot(z[e], bg[k]);
    }
    const auto load = rho.load();
    double sq = 0.0;
    for (int i : mesh.interior_nodes()) {
        r.nodal[i] -= load[i];
        r.max_abs = std::max(r.max_abs, std::abs(r.nodal[i]));
        sq += r.nodal[i] * r.nodal[i];
    }
    for (int b : mesh.boundary_nodes()) r.nodal[b] = 0.0;
    r.l2 = std::sqrt(sq);
    return r;
}

BoundarySignReport boundary_sign_report(const FluxField& z, const FeField& u, const Mesh& mesh) {
    same_mesh(z.mesh(), mesh, "flux and mesh");
    same_mesh(u.mesh(), mesh, "field and mesh");
    BoundarySignReport r;
    for (const BoundaryFacet& f : mesh.boundary_facets()) {
        const double zn = dot(z[f.element], f.normal);
        r.normal_trace.push_back(zn);
        r.max_normal_trace = std::max(r.max_normal_trace, std::abs(zn));
        const double mean = mesh.dim() == 1 ? u[f.nodes[0]] : 0.5 * (u[f.nodes[0]] + u[f.nodes[1]]);
        r.integral += f.measure * mean * zn;
    }
    r.integral += boundary_trace_integral(mesh, u);
    return r;
}

GreenDefect green_identity_check(const FluxField& z, const FeField& w, const Mesh& mesh) {
    same_mesh(z.mesh(), mesh, "flux and mesh");
    same_mesh(w.mesh(), mesh, "weight and mesh");
    auto facet_mean = [&](const std::array<int, 2>& n) {
        return mesh.dim() == 1 ? w[n[0]] : 0.5 * (w[n[0]] + w[n[1]]);
    };
    GreenDefect g;
    // div z of a piecewise constant field lives on the interior facets: the jump (z_right - z_left) . n
    for (const InteriorFacet& f : mesh.interior_facets()) {
        const Point jump{z[f.right][0] - z[f.left][0], z[f.right][1] - z[f.left][1]};
        g.divergence += f.measure * facet_mean(f.nodes) * dot(jump, f.normal);
    }
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) g.pairing += mesh.element_measure(e) * dot(z[e], w.gradient(e));
    for (const BoundaryFacet& f : mesh.boundary_facets())
        g.boundary += f.measure * facet_mean(f.nodes) * dot(z[f.element], f.normal);
    g.defect = std::abs(g.divergence + g.pairing - g.boundary);
    return g;
}

}  // namespace bvmp
