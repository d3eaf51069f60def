#pragma once

#include <array>
#include <span>
#include <vector>

namespace bvmp {

using Bary = std::array<double, 3>;

/// Symmetric triangle rule in barycentric coordinates; weights sum to 1.
struct TriangleRule {
    std::vector<Bary> points;
    std::vector<double> weights;
    int degree = 0;
};

/// Available sizes: 1 (degree 1), 3 (degree 2), 6 (degree 4), 7 (degree 5).
const TriangleRule& triangle_rule(int points);

/// Gauss-Legendre nodes/weights on [0, 1]; weights sum to 1.
struct LineRule {
    std::vector<double> points;
    std::vector<double> weights;
};
const LineRule& gauss_legendre(int points);

/// Quadrature settings for nonsmooth integrands on triangles.
struct Quadrature {
    int points = 7;  // triangle rule size
    int refine = 0;  // each clipped piece is split into 4^refine similar triangles
};

/// Sub-triangle of a parent triangle, vertices in parent barycentric coordinates.
struct SubTriangle {
    std::array<Bary, 3> vertices{};
    double fraction = 0.0;  // |sub| / |parent|
};

/// Pieces of a triangle where the linear interpolant of `values` is > level
/// (clip_above) or < level (clip_below). Returns the number of pieces (0..2).
int clip_above(const std::array<double, 3>& values, double level, std::array<SubTriangle, 2>& out);
int clip_below(const std::array<double, 3>& values, double level, std::array<SubTriangle, 2>& out);

/// Sub-interval [t0, t1] of [0, 1] where the linear interpolant from ua to ub is
/// > level (above) or < level (below). Returns false when empty.
bool clip_interval_above(double ua, double ub, double level, double& t0, double& t1);
bool clip_interval_below(double ua, double ub, double level, double& t0, double& t1);

/// Applies `fn(weight_fraction, bary)` for every quadrature point of the
/// refined sub-triangle `sub`; weight fractions are relative to the parent area.
template <class Fn>
void for_each_point(const SubTriangle& sub, const Quadrature& quad, Fn&& fn);

/// Mean of s -> (a + (b - a) s)^k over [0, 1] for a, b >= 0, k > -1.
double mean_power(double a, double b, double k);
/// Integral of s -> s (a + (b - a) s)^k over [0, 1] for a, b >= 0, k > -1.
double first_moment_power(double a, double b, double k);

/// Exact integral of |u|^r over one element where u is linear with the given
/// end values (1D) and `length` is the element length.
double interval_abs_power(double ua, double ub, double r, double length);

// ---------------------------------------------------------------------------

namespace detail {
void refine_once(const SubTriangle& parent, std::array<SubTriangle, 4>& children);

template <class Fn>
void visit_refined(const SubTriangle& sub, const TriangleRule& rule, int levels, Fn& fn) {
    if (levels > 0) {
        std::array<SubTriangle, 4> children;
        refine_once(sub, children);
        for (const auto& c : children) visit_refined(c, rule, levels - 1, fn);
        return;
    }
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
        const Bary& xi = rule.points[q];
        Bary lam{};
        for (int j = 0; j < 3; ++j)
            lam[j] = xi[0] * sub.vertices[0][j] + xi[1] * sub.vertices[1][j] + xi[2] * sub.vertices[2][j];
        fn(rule.weights[q] * sub.fraction, lam);
    }
}
}  // namespace detail

template <class Fn>
void for_each_point(const SubTriangle& sub, const Quadrature& quad, Fn&& fn) {
    detail::visit_refined(sub, triangle_rule(quad.points), quad.refine, fn);
}

}  // namespace bvmp
