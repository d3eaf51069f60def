#include "bvmp/fields.hpp"

#include "bvmp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bvmp {

double norm(const Point& a) { return std::hypot(a[0], a[1]); }

Point p1_gradient(const Mesh& mesh, std::size_t e, std::span<const double> hi, std::span<const double> lo) {
    const Element& el = mesh.elements()[e];
    const auto& grads = mesh.basis_gradients(e);
    Point g{0.0, 0.0};
    for (int k = 1; k < mesh.nodes_per_element(); ++k) {
        double d = hi[el[k]] - hi[el[0]];
        if (!lo.empty()) d += lo[el[k]] - lo[el[0]];
        g[0] += d * grads[k][0];
        g[1] += d * grads[k][1];
    }
    return g;
}

FeField::FeField(MeshPtr mesh, std::vector<double> values, bool dirichlet)
    : FeField(std::move(mesh), std::move(values), {}, dirichlet) {}

FeField::FeField(MeshPtr mesh, std::vector<double> values, std::vector<double> low, bool dirichlet)
    : mesh_(std::move(mesh)), values_(std::move(values)), low_(std::move(low)), dirichlet_(dirichlet) {
    if (!mesh_) throw Error("invalid_argument", "field requires a mesh");
    if (values_.size() != mesh_->num_nodes())
        throw Error("invalid_argument",
                    fmt::format("field has {} values for {} nodes", values_.size(), mesh_->num_nodes()));
    if (!low_.empty() && low_.size() != values_.size())
        throw Error("invalid_argument", "low-order part must have one entry per node");
    if (dirichlet_) {
        for (int b : mesh_->boundary_nodes()) {
            if (values_[b] != 0.0 || (!low_.empty() && low_[b] != 0.0))
                throw Error("invalid_argument", fmt::format("Dirichlet field is nonzero at boundary node {}", b));
        }
    }
}

FeField FeField::zeros(MeshPtr mesh, bool dirichlet) {
    const std::size_t n = mesh->num_nodes();
    return FeField(std::move(mesh), std::vector<double>(n, 0.0), dirichlet);
}

FeField FeField::interpolate(MeshPtr mesh, const std::function<double(const Point&)>& fn, bool dirichlet) {
    std::vector<double> v(mesh->num_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(mesh->nodes()[i]);
    if (dirichlet)
        for (int b : mesh->boundary_nodes()) v[b] = 0.0;
    return FeField(std::move(mesh), std::move(v), dirichlet);
}

FeField FeField::from_dofs(MeshPtr mesh, std::span<const double> dofs, std::span<const double> low_dofs) {
    if (dofs.size() != mesh->num_dofs())
        throw Error("invalid_argument", fmt::format("{} DOF values for {} interior nodes", dofs.size(), mesh->num_dofs()));
    if (!low_dofs.empty() && low_dofs.size() != dofs.size())
        throw Error("invalid_argument", "low-order DOF part has the wrong size");
    std::vector<double> v(mesh->num_nodes(), 0.0);
    std::vector<double> lo;
    const auto interior = mesh->interior_nodes();
    for (std::size_t k = 0; k < dofs.size(); ++k) v[interior[k]] = dofs[k];
    if (!low_dofs.empty()) {
        lo.assign(mesh->num_nodes(), 0.0);
        for (std::size_t k = 0; k < dofs.size(); ++k) lo[interior[k]] = low_dofs[k];
    }
    return FeField(std::move(mesh), std::move(v), std::move(lo), true);
}

void FeField::set(std::size_t node, double value) {
    if (dirichlet_ && mesh_->is_boundary(static_cast<int>(node)) && value != 0.0)
        throw Error("invalid_argument", fmt::format("cannot set pinned boundary node {}", node));
    values_.at(node) = value;
    if (!low_.empty()) low_[node] = 0.0;
}

std::vector<double> FeField::dofs() const {
    const auto interior = mesh_->interior_nodes();
    std::vector<double> out(interior.size());
    for (std::size_t k = 0; k < interior.size(); ++k) out[k] = values_[interior[k]];
    return out;
}

std::vector<double> FeField::low_dofs() const {
    const auto interior = mesh_->interior_nodes();
    std::vector<double> out(interior.size(), 0.0);
    if (!low_.empty())
        for (std::size_t k = 0; k < interior.size(); ++k) out[k] = low_[interior[k]];
    return out;
}

FeField FeField::scaled(double t) const {
    std::vector<double> v(values_);
    if (low_.empty()) {
        for (double& x : v) x *= t;
        return FeField(mesh_, std::move(v), dirichlet_);
    }
    std::vector<double> lo(low_);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double p = v[i] * t;
        const double err = std::fma(v[i], t, -p);
        const double l = err + lo[i] * t;
        v[i] = p + l;
        lo[i] = l - (v[i] - p);
    }
    return FeField(mesh_, std::move(v), std::move(lo), dirichlet_);
}

Point FeField::gradient(std::size_t e) const { return p1_gradient(*mesh_, e, values_, low_); }

double FeField::max_value() const { return *std::max_element(values_.begin(), values_.end()); }
double FeField::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

FluxField::FluxField(MeshPtr mesh, std::vector<Point> vectors) : mesh_(std::move(mesh)), vectors_(std::move(vectors)) {
    if (!mesh_) throw Error("invalid_argument", "flux field requires a mesh");
    if (vectors_.size() != mesh_->num_elements())
        throw Error("invalid_argument",
                    fmt::format("flux has {} vectors for {} elements", vectors_.size(), mesh_->num_elements()));
    if (mesh_->dim() == 1) {
        for (const Point& z : vectors_)
            if (z[1] != 0.0) throw Error("invalid_argument", "1D flux must have a zero second component");
    }
}

FluxField FluxField::scaled(double t) const {
    std::vector<Point> v(vectors_);
    for (Point& z : v) z = {z[0] * t, z[1] * t};
    return FluxField(mesh_, std::move(v));
}

double boundary_trace_integral(const Mesh& mesh, const FeField& u) {
    if (&u.mesh() != &mesh) throw Error("invalid_argument", "field does not live on the given mesh");
    double s = 0.0;
    for (const BoundaryFacet& f : mesh.boundary_facets()) {
        if (mesh.dim() == 1) {
            s += std::abs(u[f.nodes[0]]);
            continue;
        }
        const double a = u[f.nodes[0]], b = u[f.nodes[1]];
        if ((a >= 0.0) == (b >= 0.0))
            s += f.measure * 0.5 * std::abs(a + b);
        else  // the trace changes sign inside the facet
            s += f.measure * 0.5 * (a * a + b * b) / (std::abs(a) + std::abs(b));
    }
    return s;
}

}  // namespace bvmp
