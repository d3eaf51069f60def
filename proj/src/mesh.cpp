#include "bvmp/mesh.hpp"

#include "bvmp/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace bvmp {

Domain Domain::interval(double length) {
    if (!(length > 0.0)) throw Error("invalid_argument", "interval length must be positive");
    return Domain{DomainKind::interval, length, 0.0};
}

Domain Domain::rectangle(double lx, double ly) {
    if (!(lx > 0.0) || !(ly > 0.0)) throw Error("invalid_argument", "rectangle lengths must be positive");
    return Domain{DomainKind::rectangle, lx, ly};
}

Mesh::Mesh(Domain domain, std::vector<Point> nodes, std::vector<Element> elements)
    : domain_(domain), nodes_(std::move(nodes)), elements_(std::move(elements)) {
    const int d = dim();
    const std::size_t ne = elements_.size();
    measures_.resize(ne);
    gradients_.resize(ne);

    for (std::size_t e = 0; e < ne; ++e) {
        const Element& el = elements_[e];
        for (int k = 0; k <= d; ++k) {
            if (el[k] < 0 || static_cast<std::size_t>(el[k]) >= nodes_.size())
                throw Error("invalid_argument", fmt::format("element {} references node {} out of range", e, el[k]));
        }
        if (d == 1) {
            const double h = nodes_[el[1]][0] - nodes_[el[0]][0];
            if (!(h > 0.0)) throw Error("invalid_argument", fmt::format("element {} has non-positive length", e));
            measures_[e] = h;
            gradients_[e] = {Point{-1.0 / h, 0.0}, Point{1.0 / h, 0.0}, Point{0.0, 0.0}};
        } else {
            const Point& p0 = nodes_[el[0]];
            const Point& p1 = nodes_[el[1]];
            const Point& p2 = nodes_[el[2]];
            const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            if (!(det > 0.0))
                throw Error("invalid_argument", fmt::format("element {} is degenerate or clockwise", e));
            measures_[e] = 0.5 * det;
            gradients_[e] = {Point{(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det},
                             Point{(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det},
                             Point{(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det}};
        }
    }

    double total = 0.0;
    for (double m : measures_) total += m;
    if (std::abs(total - domain_.measure()) > 1e-12 * domain_.measure())
        throw Error("invalid_argument",
                    fmt::format("element measures sum to {} but the domain measure is {}", total, domain_.measure()));

    // Facets: a facet owned by one element lies on the boundary.
    std::vector<char> on_boundary(nodes_.size(), 0);
    if (d == 1) {
        std::map<int, std::vector<std::pair<int, int>>> touching;  // node -> (element, local)
        for (std::size_t e = 0; e < ne; ++e) {
            touching[elements_[e][0]].emplace_back(static_cast<int>(e), 0);
            touching[elements_[e][1]].emplace_back(static_cast<int>(e), 1);
        }
        for (const auto& [node, list] : touching) {
            if (list.size() == 1) {
                const auto [e, local] = list.front();
                on_boundary[node] = 1;
                boundary_facets_.push_back({{node, node}, e, Point{local == 0 ? -1.0 : 1.0, 0.0}, 1.0});
            } else if (list.size() == 2) {
                const auto& a = list[0];
                const auto& b = list[1];
                const int left = a.second == 1 ? a.first : b.first;
                const int right = a.second == 1 ? b.first : a.first;
                interior_facets_.push_back({{node, node}, left, right, Point{1.0, 0.0}, 1.0});
            } else {
                throw Error("invalid_argument", fmt::format("node {} is shared by {} elements", node, list.size()));
            }
        }
    } else {
        std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edges;  // (lo, hi) -> (element, local edge)
        for (std::size_t e = 0; e < ne; ++e) {
            for (int k = 0; k < 3; ++k) {
                const int a = elements_[e][k];
                const int b = elements_[e][(k + 1) % 3];
                edges[{std::min(a, b), std::max(a, b)}].emplace_back(static_cast<int>(e), k);
            }
        }
        for (const auto& [key, list] : edges) {
            const auto [e, k] = list.front();
            const int a = elements_[e][k];
            const int b = elements_[e][(k + 1) % 3];
            const double dx = nodes_[b][0] - nodes_[a][0];
            const double dy = nodes_[b][1] - nodes_[a][1];
            const double len = std::hypot(dx, dy);
            const Point outward{dy / len, -dx / len};  // counter-clockwise element
            if (list.size() == 1) {
                on_boundary[a] = on_boundary[b] = 1;
                boundary_facets_.push_back({{a, b}, e, outward, len});
            } else if (list.size() == 2) {
                interior_facets_.push_back({{a, b}, e, list[1].first, outward, len});
            } else {
                throw Error("invalid_argument", fmt::format("edge ({}, {}) is shared by {} elements", key.first,
                                                            key.second, list.size()));
            }
        }
    }

    dof_index_.assign(nodes_.size(), -1);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (on_boundary[i]) {
            boundary_nodes_.push_back(static_cast<int>(i));
        } else {
            dof_index_[i] = static_cast<int>(interior_nodes_.size());
            interior_nodes_.push_back(static_cast<int>(i));
        }
    }
}

Point Mesh::centroid(std::size_t e) const {
    const int k = nodes_per_element();
    Point c{0.0, 0.0};
    for (int j = 0; j < k; ++j) {
        c[0] += nodes_[elements_[e][j]][0];
        c[1] += nodes_[elements_[e][j]][1];
    }
    return {c[0] / k, c[1] / k};
}

MeshPtr build_interval_mesh(double length, int n) {
    if (n < 2) throw Error("invalid_argument", "interval mesh needs n >= 2 elements (no interior degree of freedom)");
    const Domain domain = Domain::interval(length);
    std::vector<Point> nodes(n + 1);
    for (int i = 0; i <= n; ++i) nodes[i] = {i == n ? length : length * i / n, 0.0};
    std::vector<Element> elements(n);
    for (int i = 0; i < n; ++i) elements[i] = {i, i + 1, -1};
    return std::make_shared<const Mesh>(domain, std::move(nodes), std::move(elements));
}

MeshPtr build_rect_mesh(double lx, double ly, int nx, int ny) {
    if (nx < 2 || ny < 2) throw Error("invalid_argument", "rectangle mesh needs nx, ny >= 2");
    const Domain domain = Domain::rectangle(lx, ly);
    std::vector<Point> nodes;
    nodes.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j) {
        const double y = j == ny ? ly : ly * j / ny;
        for (int i = 0; i <= nx; ++i) nodes.push_back({i == nx ? lx : lx * i / nx, y});
    }
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    std::vector<Element> elements;
    elements.reserve(2 * static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int n00 = id(i, j), n10 = id(i + 1, j), n01 = id(i, j + 1), n11 = id(i + 1, j + 1);
            elements.push_back({n00, n10, n11});
            elements.push_back({n00, n11, n01});
        }
    }
    return std::make_shared<const Mesh>(domain, std::move(nodes), std::move(elements));
}

MeshPtr build_mesh(const Domain& domain, int nx, int ny) {
    if (domain.kind == DomainKind::interval) return build_interval_mesh(domain.lx, nx);
    return build_rect_mesh(domain.lx, domain.ly, nx, ny);
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
    const Domain& d = mesh.domain();
    os << "# bvmp mesh v1\n";
    os << fmt::format("domain {} {:.17g} {:.17g}\n", d.kind == DomainKind::interval ? "interval" : "rectangle", d.lx,
                      d.ly);
    os << "nodes " << mesh.num_nodes() << '\n';
    for (const Point& p : mesh.nodes()) {
        if (mesh.dim() == 1)
            os << fmt::format("{:.17g}\n", p[0]);
        else
            os << fmt::format("{:.17g} {:.17g}\n", p[0], p[1]);
    }
    os << "elements " << mesh.num_elements() << '\n';
    for (const Element& el : mesh.elements()) {
        if (mesh.dim() == 1)
            os << el[0] << ' ' << el[1] << '\n';
        else
            os << el[0] << ' ' << el[1] << ' ' << el[2] << '\n';
    }
}

namespace {

bool next_content_line(std::istream& is, std::string& line) {
    while (std::getline(is, line)) {
        if (!line.empty() && line[0] != '#') return true;
    }
    return false;
}

}  // namespace

MeshPtr read_mesh(std::istream& is) {
    std::string line;
    auto fail = [](const std::string& what) { return Error("io", "malformed mesh file: " + what); };

    if (!next_content_line(is, line)) throw fail("missing domain line");
    std::istringstream head(line);
    std::string tag, kind;
    double lx = 0.0, ly = 0.0;
    if (!(head >> tag >> kind >> lx >> ly) || tag != "domain") throw fail("bad domain line");
    const Domain domain = kind == "interval" ? Domain::interval(lx) : Domain::rectangle(lx, ly);
    const int d = domain.dim();

    std::size_t count = 0;
    if (!next_content_line(is, line)) throw fail("missing node count");
    std::istringstream nodes_head(line);
    if (!(nodes_head >> tag >> count) || tag != "nodes") throw fail("bad node count line");
    std::vector<Point> nodes(count);
    for (auto& p : nodes) {
        if (!next_content_line(is, line)) throw fail("truncated node list");
        std::istringstream ls(line);
        if (!(ls >> p[0])) throw fail("bad node line");
        if (d == 2 && !(ls >> p[1])) throw fail("bad node line");
    }

    if (!next_content_line(is, line)) throw fail("missing element count");
    std::istringstream elem_head(line);
    if (!(elem_head >> tag >> count) || tag != "elements") throw fail("bad element count line");
    std::vector<Element> elements(count, Element{-1, -1, -1});
    for (auto& el : elements) {
        if (!next_content_line(is, line)) throw fail("truncated element list");
        std::istringstream ls(line);
        for (int k = 0; k <= d; ++k)
            if (!(ls >> el[k])) throw fail("bad element line");
    }
    return std::make_shared<const Mesh>(domain, std::move(nodes), std::move(elements));
}

}  // namespace bvmp
