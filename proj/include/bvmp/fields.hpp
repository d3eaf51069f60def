#pragma once

#include "bvmp/mesh.hpp"

#include <functional>
#include <span>
#include <vector>

namespace bvmp {

/// Gradient of the P1 interpolant on element e, from the difference form
/// sum_k (u_k - u_0) grad phi_k. When `lo` is nonempty each nodal value is the
/// unevaluated sum hi + lo, which resolves gradients far below ulp(u).
Point p1_gradient(const Mesh& mesh, std::size_t e, std::span<const double> hi, std::span<const double> lo);

/// Nodal P1 coefficients on a mesh. With the Dirichlet flag set, boundary
/// values are pinned to exactly zero. An optional low-order part extends the
/// nodal values to double-double precision; values() returns the leading part.
class FeField {
public:
    FeField(MeshPtr mesh, std::vector<double> values, bool dirichlet);
    FeField(MeshPtr mesh, std::vector<double> values, std::vector<double> low, bool dirichlet);

    static FeField zeros(MeshPtr mesh, bool dirichlet = true);
    static FeField interpolate(MeshPtr mesh, const std::function<double(const Point&)>& fn, bool dirichlet);
    /// Dirichlet field from interior DOF values (mesh interior-node order).
    static FeField from_dofs(MeshPtr mesh, std::span<const double> dofs, std::span<const double> low_dofs = {});

    const Mesh& mesh() const { return *mesh_; }
    const MeshPtr& mesh_ptr() const { return mesh_; }
    bool dirichlet() const { return dirichlet_; }

    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    /// Low-order parts (empty for plain double fields).
    std::span<const double> low() const { return low_; }
    bool compensated() const { return !low_.empty(); }

    /// Throws when writing a nonzero value to a pinned boundary node.
    void set(std::size_t node, double value);

    std::vector<double> dofs() const;
    std::vector<double> low_dofs() const;
    FeField scaled(double t) const;

    /// Constant gradient on element e (second component is 0 in 1D).
    Point gradient(std::size_t e) const;

    double max_value() const;
    double min_value() const;

private:
    MeshPtr mesh_;
    std::vector<double> values_;
    std::vector<double> low_;
    bool dirichlet_;
};

/// Piecewise-constant vector field, one vector per element.
class FluxField {
public:
    FluxField(MeshPtr mesh, std::vector<Point> vectors);

    const Mesh& mesh() const { return *mesh_; }
    const MeshPtr& mesh_ptr() const { return mesh_; }
    std::span<const Point> vectors() const { return vectors_; }
    const Point& operator[](std::size_t e) const { return vectors_[e]; }

    FluxField scaled(double t) const;

private:
    MeshPtr mesh_;
    std::vector<Point> vectors_;
};

/// Exact integral of |u| over the boundary for the piecewise-linear trace
/// (counting measure at the two end points in 1D).
double boundary_trace_integral(const Mesh& mesh, const FeField& u);

inline double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1]; }
double norm(const Point& a);

}  // namespace bvmp
