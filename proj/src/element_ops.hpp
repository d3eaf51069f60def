#pragma once

// Per-element integrals shared by the energy, selection and continuation code.
// Each function reads the nodal values of one element and returns (or writes)
// that element's contribution; reductions happen in the callers.

#include "bvmp/fields.hpp"
#include "bvmp/mesh.hpp"
#include "bvmp/nonlinearity.hpp"
#include "bvmp/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace bvmp::detail {

inline std::array<double, 3> gather(const Mesh& mesh, std::size_t e, std::span<const double> vals) {
    const Element& el = mesh.elements()[e];
    std::array<double, 3> u{};
    for (int k = 0; k < mesh.nodes_per_element(); ++k) u[k] = vals[el[k]];
    return u;
}

inline double grad_norm(const Mesh& mesh, std::size_t e, std::span<const double> hi, std::span<const double> lo) {
    const Point g = p1_gradient(mesh, e, hi, lo);
    return std::hypot(g[0], g[1]);
}

inline bool is_tie_element(const Mesh& mesh, const std::array<double, 3>& u, double beta) {
    for (int k = 0; k < mesh.nodes_per_element(); ++k)
        if (u[k] != beta) return false;
    return true;
}

/// Values at the ends of the sub-interval [t0, t1] of a clipped 1D element;
/// the crossing ends are set to the level exactly.
inline void clipped_ends(double ua, double ub, double level, double t0, double t1, double& va, double& vb) {
    va = t0 > 0.0 ? level : ua;
    vb = t1 < 1.0 ? level : ub;
}

/// Integral of F_beta(u) over element e.
inline double element_F(const Mesh& mesh, std::size_t e, std::span<const double> vals, const ProblemParams& P,
                        const Quadrature& quad) {
    const auto u = gather(mesh, e, vals);
    const double area = mesh.element_measure(e);
    const double bq = std::pow(P.beta, P.q);
    if (mesh.dim() == 1) {
        double t0 = 0.0, t1 = 0.0;
        if (!clip_interval_above(u[0], u[1], P.beta, t0, t1)) return 0.0;
        double va = 0.0, vb = 0.0;
        clipped_ends(u[0], u[1], P.beta, t0, t1, va, vb);
        const double m = mean_power(va, vb, P.q);
        return area * (t1 - t0) * std::max(m - bq, 0.0) / P.q;
    }
    std::array<SubTriangle, 2> pieces;
    const int np = clip_above(u, P.beta, pieces);
    double s = 0.0;
    for (int k = 0; k < np; ++k) {
        for_each_point(pieces[k], quad, [&](double w, const Bary& lam) {
            const double x = std::max(lam[0] * u[0] + lam[1] * u[1] + lam[2] * u[2], P.beta);
            s += w * (std::pow(x, P.q) - bq);
        });
    }
    return area * s / P.q;
}

/// Local load vector int rho(u) phi_k over element e for the selection rule.
inline void element_load(const Mesh& mesh, std::size_t e, std::span<const double> vals, const ProblemParams& P,
                         SelectionRule rule, const Quadrature& quad, std::array<double, 3>& out) {
    out = {0.0, 0.0, 0.0};
    const auto u = gather(mesh, e, vals);
    const double area = mesh.element_measure(e);
    const int nv = mesh.nodes_per_element();
    if (is_tie_element(mesh, u, P.beta)) {
        const double rho = select(P.beta, P, rule);
        for (int k = 0; k < nv; ++k) out[k] = rho * area / nv;
        return;
    }
    const double k1 = P.q - 1.0;
    if (mesh.dim() == 1) {
        double t0 = 0.0, t1 = 0.0;
        if (!clip_interval_above(u[0], u[1], P.beta, t0, t1)) return;
        double va = 0.0, vb = 0.0;
        clipped_ends(u[0], u[1], P.beta, t0, t1, va, vb);
        const double len = area * (t1 - t0);
        const double m0 = mean_power(va, vb, k1);
        const double m1 = first_moment_power(va, vb, k1);
        // phi_1(t) = t with t = t0 + (t1 - t0) s on the clipped piece
        out[1] = len * (t0 * m0 + (t1 - t0) * m1);
        out[0] = len * m0 - out[1];
        return;
    }
    std::array<SubTriangle, 2> pieces;
    const int np = clip_above(u, P.beta, pieces);
    for (int k = 0; k < np; ++k) {
        for_each_point(pieces[k], quad, [&](double w, const Bary& lam) {
            const double x = std::max(lam[0] * u[0] + lam[1] * u[1] + lam[2] * u[2], P.beta);
            const double rho = std::pow(x, k1);
            for (int j = 0; j < 3; ++j) out[j] += w * rho * lam[j];
        });
    }
    for (int j = 0; j < 3; ++j) out[j] *= area;
}

/// (u, rho) pairs at the interior quadrature points of element e.
inline void element_samples(const Mesh& mesh, std::size_t e, std::span<const double> vals, const ProblemParams& P,
                            SelectionRule rule, const Quadrature& quad, std::vector<SelectionField::Sample>& out) {
    const auto u = gather(mesh, e, vals);
    if (mesh.dim() == 1) {
        for (double s : gauss_legendre(3).points) {
            const double x = (1.0 - s) * u[0] + s * u[1];
            out.push_back({x, select(x, P, rule)});
        }
        return;
    }
    for (const Bary& lam : triangle_rule(quad.points).points) {
        const double x = lam[0] * u[0] + lam[1] * u[1] + lam[2] * u[2];
        out.push_back({x, select(x, P, rule)});
    }
}

/// Integral of |u|^r over element e.
inline double element_abs_power(const Mesh& mesh, std::size_t e, std::span<const double> vals, double r,
                                const Quadrature& quad) {
    const auto u = gather(mesh, e, vals);
    const double area = mesh.element_measure(e);
    if (mesh.dim() == 1) return interval_abs_power(u[0], u[1], r, area);
    std::array<SubTriangle, 2> pieces;
    double s = 0.0;
    for (int sign = 0; sign < 2; ++sign) {
        const int np = sign == 0 ? clip_above(u, 0.0, pieces) : clip_below(u, 0.0, pieces);
        for (int k = 0; k < np; ++k) {
            for_each_point(pieces[k], quad, [&](double w, const Bary& lam) {
                s += w * std::pow(std::abs(lam[0] * u[0] + lam[1] * u[1] + lam[2] * u[2]), r);
            });
        }
    }
    return area * s;
}

/// Measure of {u > level} inside element e (exact for the linear interpolant).
inline double element_superlevel(const Mesh& mesh, std::size_t e, std::span<const double> vals, double level) {
    const auto u = gather(mesh, e, vals);
    const double area = mesh.element_measure(e);
    if (mesh.dim() == 1) {
        double t0 = 0.0, t1 = 0.0;
        return clip_interval_above(u[0], u[1], level, t0, t1) ? area * (t1 - t0) : 0.0;
    }
    std::array<SubTriangle, 2> pieces;
    const int np = clip_above(u, level, pieces);
    double f = 0.0;
    for (int k = 0; k < np; ++k) f += pieces[k].fraction;
    return area * f;
}

}  // namespace bvmp::detail
