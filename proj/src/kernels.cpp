#include "bvmp/kernels.hpp"

#include "element_ops.hpp"

#include <omp.h>

#include <cmath>

namespace bvmp {

void set_threads(int threads) {
    if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

namespace {

template <class Fn>
double reduce_elements(std::size_t ne, Exec exec, Fn&& fn) {
    double sum = 0.0;
    if (exec == Exec::serial) {
        for (std::size_t e = 0; e < ne; ++e) sum += fn(e);
        return sum;
    }
    std::vector<double> vals(ne);
    const auto n = static_cast<std::ptrdiff_t>(ne);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < n; ++e) vals[e] = fn(static_cast<std::size_t>(e));
    for (double v : vals) sum += v;
    return sum;
}

template <class Fn>
void scatter_elements(const Mesh& mesh, Exec exec, std::vector<double>& out, Fn&& fn) {
    out.assign(mesh.num_nodes(), 0.0);
    const std::size_t ne = mesh.num_elements();
    const int nv = mesh.nodes_per_element();
    if (exec == Exec::serial) {
        std::array<double, 3> local{};
        for (std::size_t e = 0; e < ne; ++e) {
            fn(e, local);
            const Element& el = mesh.elements()[e];
            for (int k = 0; k < nv; ++k) out[el[k]] += local[k];
        }
        return;
    }
    std::vector<std::array<double, 3>> locals(ne);
    const auto n = static_cast<std::ptrdiff_t>(ne);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < n; ++e) fn(static_cast<std::size_t>(e), locals[e]);
    for (std::size_t e = 0; e < ne; ++e) {
        const Element& el = mesh.elements()[e];
        for (int k = 0; k < nv; ++k) out[el[k]] += locals[e][k];
    }
}

}  // namespace

namespace kernels {

double grad_power_sum(const FeField& u, double p, Exec exec) {
    const Mesh& mesh = u.mesh();
    const auto vals = u.values();
    const auto lo = u.low();
    return reduce_elements(mesh.num_elements(), exec, [&](std::size_t e) {
        return std::pow(detail::grad_norm(mesh, e, vals, lo), p) * mesh.element_measure(e);
    });
}

double grad_norm_sum(const FeField& u, Exec exec) {
    const Mesh& mesh = u.mesh();
    const auto vals = u.values();
    const auto lo = u.low();
    return reduce_elements(mesh.num_elements(), exec,
                           [&](std::size_t e) { return detail::grad_norm(mesh, e, vals, lo) * mesh.element_measure(e); });
}

double F_integral(const FeField& u, const ProblemParams& params, const Quadrature& quad, Exec exec) {
    const Mesh& mesh = u.mesh();
    const auto vals = u.values();
    return reduce_elements(mesh.num_elements(), exec,
                           [&](std::size_t e) { return detail::element_F(mesh, e, vals, params, quad); });
}

double abs_power_integral(const FeField& u, double r, const Quadrature& quad, Exec exec) {
    const Mesh& mesh = u.mesh();
    const auto vals = u.values();
    return reduce_elements(mesh.num_elements(), exec,
                           [&](std::size_t e) { return detail::element_abs_power(mesh, e, vals, r, quad); });
}

double superlevel_measure(const FeField& u, double level, Exec exec) {
    const Mesh& mesh = u.mesh();
    const auto vals = u.values();
    return reduce_elements(mesh.num_elements(), exec,
                           [&](std::size_t e) { return detail::element_superlevel(mesh, e, vals, level); });
}

int flux_residual(const FeField& u, double p, double gradtol, Exec exec, std::vector<double>& out) {
    const Mesh& mesh = u.mesh();
    const auto vals = u.values();
    const auto lo = u.low();
    const int nv = mesh.nodes_per_element();
    std::vector<char> degenerate(mesh.num_elements(), 0);
    scatter_elements(mesh, exec, out, [&](std::size_t e, std::array<double, 3>& local) {
        local = {0.0, 0.0, 0.0};
        const Point g = p1_gradient(mesh, e, vals, lo);
        const double a = std::hypot(g[0], g[1]);
        if (a <= gradtol || a == 0.0) {
            degenerate[e] = 1;
            return;
        }
        const double s = std::pow(a, p - 2.0) * mesh.element_measure(e);
        const auto& bg = mesh.basis_gradients(e);
        for (int k = 0; k < nv; ++k) local[k] = s * (g[0] * bg[k][0] + g[1] * bg[k][1]);
    });
    int count = 0;
    for (char d : degenerate) count += d;
    return count;
}

void load_vector(const FeField& u, const ProblemParams& params, SelectionRule rule, const Quadrature& quad,
                 Exec exec, std::vector<double>& out) {
    const Mesh& mesh = u.mesh();
    const auto vals = u.values();
    scatter_elements(mesh, exec, out, [&](std::size_t e, std::array<double, 3>& local) {
        detail::element_load(mesh, e, vals, params, rule, quad, local);
    });
}

}  // namespace kernels
}  // namespace bvmp
