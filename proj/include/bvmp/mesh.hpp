#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace bvmp {

using Point = std::array<double, 2>;

enum class DomainKind { interval, rectangle };

/// Interval [0, lx] or rectangle [0, lx] x [0, ly].
struct Domain {
    DomainKind kind = DomainKind::interval;
    double lx = 1.0;
    double ly = 0.0;

    static Domain interval(double length);
    static Domain rectangle(double lx, double ly);

    int dim() const { return kind == DomainKind::interval ? 1 : 2; }
    double measure() const { return kind == DomainKind::interval ? lx : lx * ly; }
};

/// Simplex node indices; 1D elements use the first two entries.
using Element = std::array<int, 3>;

struct BoundaryFacet {
    std::array<int, 2> nodes{};  // 1D facets use nodes[0] only
    int element = -1;
    Point normal{};              // outward unit normal
    double measure = 0.0;        // length in 2D, 1 (counting measure) in 1D
};

struct InteriorFacet {
    std::array<int, 2> nodes{};
    int left = -1;
    int right = -1;
    Point normal{};              // unit normal pointing from left into right
    double measure = 0.0;
};

/// Conforming P1 simplicial mesh. Immutable after construction.
class Mesh {
public:
    /// Builds all derived data (measures, basis gradients, facets) from raw lists.
    /// Elements must be positively oriented in 2D and left-to-right in 1D.
    Mesh(Domain domain, std::vector<Point> nodes, std::vector<Element> elements);

    const Domain& domain() const { return domain_; }
    int dim() const { return domain_.dim(); }
    int nodes_per_element() const { return dim() + 1; }
    double measure() const { return domain_.measure(); }

    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_elements() const { return elements_.size(); }

    std::span<const Point> nodes() const { return nodes_; }
    std::span<const Element> elements() const { return elements_; }
    std::span<const double> element_measures() const { return measures_; }
    double element_measure(std::size_t e) const { return measures_[e]; }

    /// Constant gradient of the local basis function `local` on element `e`.
    const Point& basis_gradient(std::size_t e, int local) const { return gradients_[e][local]; }
    const std::array<Point, 3>& basis_gradients(std::size_t e) const { return gradients_[e]; }

    std::span<const int> boundary_nodes() const { return boundary_nodes_; }
    std::span<const int> interior_nodes() const { return interior_nodes_; }
    bool is_boundary(int node) const { return dof_index_[node] < 0; }
    /// Interior DOF index of a node, or -1 for boundary nodes.
    int dof_index(int node) const { return dof_index_[node]; }
    std::size_t num_dofs() const { return interior_nodes_.size(); }

    std::span<const BoundaryFacet> boundary_facets() const { return boundary_facets_; }
    std::span<const InteriorFacet> interior_facets() const { return interior_facets_; }

    Point centroid(std::size_t e) const;

private:
    Domain domain_;
    std::vector<Point> nodes_;
    std::vector<Element> elements_;
    std::vector<double> measures_;
    std::vector<std::array<Point, 3>> gradients_;
    std::vector<int> boundary_nodes_;
    std::vector<int> interior_nodes_;
    std::vector<int> dof_index_;
    std::vector<BoundaryFacet> boundary_facets_;
    std::vector<InteriorFacet> interior_facets_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Uniform partition of [0, length] into n elements. Requires n >= 2.
MeshPtr build_interval_mesh(double length, int n);

/// Structured triangulation of [0, lx] x [0, ly]; every cell is split along its
/// lower-left to upper-right diagonal. Requires nx, ny >= 2.
MeshPtr build_rect_mesh(double lx, double ly, int nx, int ny);

/// Builds the default mesh for a domain with the given subdivision counts (ny ignored in 1D).
MeshPtr build_mesh(const Domain& domain, int nx, int ny);

/// Plain-text node/element lists. See README for the layout.
void write_mesh(std::ostream& os, const Mesh& mesh);
MeshPtr read_mesh(std::istream& is);

}  // namespace bvmp
