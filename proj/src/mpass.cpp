#include "bvmp/mpass.hpp"

#include "bvmp/error.hpp"

#include "element_ops.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>

namespace bvmp {

Metric parse_metric(const std::string& name) {
    if (name == "stiffness") return Metric::stiffness;
    if (name == "weighted") return Metric::weighted;
    if (name == "hessian") return Metric::hessian;
    throw Error("invalid_argument", fmt::format("unknown metric '{}' (stiffness, weighted, hessian)", name));
}

std::string to_string(Metric metric) {
    switch (metric) {
        case Metric::stiffness: return "stiffness";
        case Metric::weighted: return "weighted";
        case Metric::hessian: return "hessian";
    }
    return "hessian";
}

void validate(const MpassConfig& cfg) {
    if (cfg.m < 8) throw Error("invalid_argument", fmt::format("solver.m must be >= 8 (got {})", cfg.m));
    if (cfg.max_iter < 1) throw Error("invalid_argument", "solver.max_iter must be positive");
    if (!(cfg.eps_g > 0.0) || !(cfg.eps_c > 0.0) || !(cfg.delta_e > 0.0))
        throw Error("invalid_argument", "solver tolerances eps_g, eps_c and delta_e must be > 0");
    if (!(cfg.step0 > 0.0) || !(cfg.step_max >= cfg.step0))
        throw Error("invalid_argument", "solver steps must satisfy 0 < step0 <= step_max");
    if (!(cfg.armijo > 0.0 && cfg.armijo < 1.0)) throw Error("invalid_argument", "solver.armijo must be in (0, 1)");
    if (!(cfg.backtrack > 0.0 && cfg.backtrack < 1.0))
        throw Error("invalid_argument", "solver.backtrack must be in (0, 1)");
    if (!(cfg.endpoint_cap > 1.0)) throw Error("invalid_argument", "solver.endpoint_cap must be > 1");
    if (cfg.max_densify < 0) throw Error("invalid_argument", "solver.max_densify must be >= 0");
    if (!(cfg.metric_eps > 0.0)) throw Error("invalid_argument", "solver.metric_eps must be > 0");
}

FeField default_bump(const MeshPtr& mesh) {
    const Domain& d = mesh->domain();
    if (d.dim() == 1)
        return FeField::interpolate(mesh, [&](const Point& x) { return 1.0 - std::abs(2.0 * x[0] / d.lx - 1.0); },
                                    true);
    return FeField::interpolate(
        mesh,
        [&](const Point& x) {
            return 1.0 - std::max(std::abs(2.0 * x[0] / d.lx - 1.0), std::abs(2.0 * x[1] / d.ly - 1.0));
        },
        true);
}

FeField find_endpoint(const ProblemParams& params, const MeshPtr& mesh, const FeField& bump, const MpassConfig& cfg) {
    if (!bump.dirichlet()) throw Error("invalid_argument", "endpoint bump must be a Dirichlet field");
    if (bump.min_value() < 0.0) throw Error("invalid_argument", "endpoint bump must be nonnegative");
    if (&bump.mesh() != mesh.get()) throw Error("invalid_argument", "endpoint bump must live on the given mesh");
    const ProblemParams P = params.with_p(params.p_bar);
    for (double t = 1.0; t <= cfg.endpoint_cap; t *= 2.0) {
        FeField e = bump.scaled(t);
        if (eval_I(e, P, cfg.assembly).I < -cfg.delta_e) return e;
    }
    throw Error("endpoint", fmt::format("no endpoint with I < -{} up to scale {} (q too close to p_bar, or the bump "
                                        "never exceeds beta)",
                                        cfg.delta_e, cfg.endpoint_cap));
}

namespace {

using Vec = std::vector<double>;
using SpMat = Eigen::SparseMatrix<double>;

double dotv(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Path points are stored in double-double form (hi + lo per DOF). Near the
// degenerate limit p -> 1 the saddle has plateaus whose nodal values agree to
// the last bits of a double, and the gradients that decide the flux there are
// invisible without the extra precision.
struct DD {
    Vec hi, lo;
    DD() = default;
    explicit DD(Vec h) : hi(std::move(h)), lo(hi.size(), 0.0) {}
    DD(Vec h, Vec l) : hi(std::move(h)), lo(std::move(l)) {}
    std::size_t size() const { return hi.size(); }
    bool operator==(const DD&) const = default;
};

// (hi, lo) += b, where b carries its own rounding error err
inline void dd_add(double& hi, double& lo, double b, double err) {
    const double s = hi + b;
    const double bb = s - hi;
    const double e = (hi - (s - bb)) + (b - bb);
    const double l = lo + e + err;
    hi = s + l;
    lo = l - (hi - s);
}

/// x + s d for a plain double direction d.
DD axpy(const DD& x, double s, const Vec& d) {
    DD r = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = s * d[i];
        dd_add(r.hi[i], r.lo[i], p, std::fma(s, d[i], -p));
    }
    return r;
}

DD scaled(const DD& x, double t) {
    DD r = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = x.hi[i] * t;
        const double l = std::fma(x.hi[i], t, -p) + x.lo[i] * t;
        r.hi[i] = p + l;
        r.lo[i] = l - (r.hi[i] - p);
    }
    return r;
}

/// a - b rounded to double.
Vec diff(const DD& a, const DD& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = (a.hi[i] - b.hi[i]) + (a.lo[i] - b.lo[i]);
    return r;
}

double sup_norm(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

class Landscape {
public:
    Landscape(const ProblemParams& P, MeshPtr mesh, const MpassConfig& cfg)
        : P_(P), mesh_(std::move(mesh)), cfg_(cfg), n_(mesh_->num_dofs()) {
        stiffness_ = assemble(Metric::stiffness, DD(Vec(n_, 0.0)));
        stiffness_solver_.compute(stiffness_);
        const Mesh& m = *mesh_;
        star_start_.assign(n_ + 1, 0);
        for (std::size_t e = 0; e < m.num_elements(); ++e)
            for (int a = 0; a < m.nodes_per_element(); ++a)
                if (const int i = m.dof_index(m.elements()[e][a]); i >= 0) ++star_start_[i + 1];
        std::partial_sum(star_start_.begin(), star_start_.end(), star_start_.begin());
        star_.resize(star_start_.back());
        std::vector<int> fill(star_start_.begin(), star_start_.end() - 1);
        for (std::size_t e = 0; e < m.num_elements(); ++e)
            for (int a = 0; a < m.nodes_per_element(); ++a)
                if (const int i = m.dof_index(m.elements()[e][a]); i >= 0)
                    star_[fill[i]++] = {static_cast<int>(e), a};
    }

    std::size_t size() const { return n_; }
    const Mesh& mesh() const { return *mesh_; }

    FeField field(const DD& x) const { return FeField::from_dofs(mesh_, x.hi, x.lo); }

    double I(const DD& x) const { return eval_I(field(x), P_, cfg_.assembly).I; }
    double J(const DD& x) const { return eval_I(field(x), P_, cfg_.assembly).J; }
    double norm(const DD& x) const { return w1p_norm(field(x), P_.p, cfg_.assembly); }

    Vec grad(const DD& x) const {
        return assemble_gradient(field(x), P_, SelectionRule::pointwise, cfg_.assembly).dofs(*mesh_);
    }

    double k_norm2(const Vec& v) const {
        Eigen::Map<const Eigen::VectorXd> ev(v.data(), static_cast<Eigen::Index>(v.size()));
        return ev.dot(stiffness_ * ev);
    }

    double lambda_proxy(const Vec& g) const {
        Eigen::Map<const Eigen::VectorXd> eg(g.data(), static_cast<Eigen::Index>(g.size()));
        const Eigen::VectorXd y = stiffness_solver_.solve(eg);
        return std::sqrt(std::max(eg.dot(y), 0.0));
    }

    /// Preconditioned descent direction -M^{-1} g with the tangent component removed.
    Vec direction(const DD& x, const Vec& g, const Vec& tangent) {
        const SpMat M = assemble(cfg_.metric, x);
        if (!analyzed_) {
            solver_.analyzePattern(M);
            analyzed_ = true;
        }
        solver_.factorize(M);
        if (solver_.info() != Eigen::Success) throw Error("budget", "descent metric factorization failed");
        Eigen::Map<const Eigen::VectorXd> eg(g.data(), static_cast<Eigen::Index>(n_));
        Eigen::VectorXd d = -solver_.solve(eg);
        Eigen::Map<const Eigen::VectorXd> et(tangent.data(), static_cast<Eigen::Index>(n_));
        const Eigen::VectorXd Mt = M * et;
        const double tMt = et.dot(Mt);
        if (tMt > 0.0) d -= (d.dot(Mt) / tMt) * et;
        return Vec(d.data(), d.data() + n_);
    }

    /// Nodal relaxation: every DOF whose Q_p curvature dominates the curvature
    /// of F is moved to the zero of its own residual with the others frozen.
    /// This resolves near-flat regions, where the element weights span more
    /// decades than a global factorization can handle. Returns the largest
    /// residual seen on those nodes in the last sweep.
    double polish(DD& x, int sweeps, double tol) const {
        const Mesh& m = *mesh_;
        const auto interior = m.interior_nodes();
        Vec hi, lo;
        scatter(x, hi, lo);
        std::vector<int> stiff;
        for (std::size_t k = 0; k < n_; ++k)
            if (is_stiff(hi, lo, static_cast<int>(k))) stiff.push_back(static_cast<int>(k));
        double worst = 0.0;
        for (int sweep = 0; sweep < sweeps; ++sweep) {
            worst = 0.0;
            for (int k : stiff) {
                const int node = interior[k];
                auto r = [&](double d) { return node_residual(hi, lo, k, d); };
                const double g0 = r(0.0);
                worst = std::max(worst, std::abs(g0));
                if (std::abs(g0) <= tol) continue;
                const double h = node_curvature(hi, lo, k);
                double a = 0.0, fa = g0, b = -g0 / h, fb = r(b);
                for (int it = 0; it < 400 && (fb > 0.0) == (g0 > 0.0) && fb != 0.0; ++it) {
                    a = b;
                    fa = fb;
                    b *= 4.0;
                    fb = r(b);
                }
                if ((fb > 0.0) == (g0 > 0.0) && fb != 0.0) continue;
                const double d = root(r, a, fa, b, fb);
                dd_add(hi[node], lo[node], d, 0.0);
            }
            if (worst <= tol) break;
        }
        for (std::size_t k = 0; k < n_; ++k) {
            x.hi[k] = hi[interior[k]];
            x.lo[k] = lo[interior[k]];
        }
        return worst;
    }

    /// Newton steps on the stiff block with the Q_p Hessian: the smooth modes of
    /// a large near-flat region barely move under nodal sweeps. A step is kept
    /// only if it lowers the sup norm of the full residual. Returns that norm.
    double block_newton(DD& x, int iters) const {
        Vec hi, lo;
        scatter(x, hi, lo);
        std::vector<int> pos(n_, -1), stiff;
        for (std::size_t k = 0; k < n_; ++k)
            if (is_stiff(hi, lo, static_cast<int>(k))) {
                pos[k] = static_cast<int>(stiff.size());
                stiff.push_back(static_cast<int>(k));
            }
        if (stiff.empty()) return 0.0;
        Vec g = grad(x);
        double worst = sup_norm(g);
        const auto ns = static_cast<Eigen::Index>(stiff.size());
        for (int it = 0; it < iters; ++it) {
            const SpMat M = assemble(Metric::hessian, x);
            std::vector<Eigen::Triplet<double>> trip;
            for (Eigen::Index c = 0; c < M.outerSize(); ++c)
                for (SpMat::InnerIterator e(M, c); e; ++e)
                    if (pos[e.row()] >= 0 && pos[e.col()] >= 0) trip.emplace_back(pos[e.row()], pos[e.col()], e.value());
            SpMat S(ns, ns);
            S.setFromTriplets(trip.begin(), trip.end());
            Eigen::SimplicialLDLT<SpMat> ldlt(S);
            if (ldlt.info() != Eigen::Success) break;
            Eigen::VectorXd rhs(ns);
            for (Eigen::Index i = 0; i < ns; ++i) rhs[i] = -g[stiff[i]];
            const Eigen::VectorXd ds = ldlt.solve(rhs);
            Vec d(n_, 0.0);
            for (Eigen::Index i = 0; i < ns; ++i) d[stiff[i]] = ds[i];
            bool moved = false;
            for (double t = 1.0; t > 1e-3; t *= 0.5) {
                DD y = axpy(x, t, d);
                Vec gy = grad(y);
                if (const double w = sup_norm(gy); w < worst) {
                    x = std::move(y);
                    g = std::move(gy);
                    worst = w;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        return worst;
    }

    /// Averages d over each connected set of stiff DOFs, so that a step moves
    /// near-flat regions rigidly and leaves their internal structure (resolved
    /// by polish) intact. Returns false if there are no stiff DOFs.
    bool rigidify(const DD& x, Vec& d) const {
        const Mesh& m = *mesh_;
        Vec hi, lo;
        scatter(x, hi, lo);
        std::vector<int> comp(n_, -2);
        for (std::size_t k = 0; k < n_; ++k)
            if (is_stiff(hi, lo, static_cast<int>(k))) comp[k] = -1;
        int ncomp = 0;
        std::vector<int> stack;
        for (std::size_t k0 = 0; k0 < n_; ++k0) {
            if (comp[k0] != -1) continue;
            double sum = 0.0;
            std::vector<int> members;
            comp[k0] = ncomp;
            stack.push_back(static_cast<int>(k0));
            while (!stack.empty()) {
                const int k = stack.back();
                stack.pop_back();
                members.push_back(k);
                sum += d[k];
                for (const StarEntry& s : star(k))
                    for (int a = 0; a < m.nodes_per_element(); ++a) {
                        const int j = m.dof_index(m.elements()[s.element][a]);
                        if (j >= 0 && comp[j] == -1) {
                            comp[j] = ncomp;
                            stack.push_back(j);
                        }
                    }
            }
            for (int k : members) d[k] = sum / static_cast<double>(members.size());
            ++ncomp;
        }
        return ncomp > 0;
    }

private:
    struct StarEntry {
        int element;
        int local;
    };

    void scatter(const DD& x, Vec& hi, Vec& lo) const {
        const auto interior = mesh_->interior_nodes();
        hi.assign(mesh_->num_nodes(), 0.0);
        lo.assign(mesh_->num_nodes(), 0.0);
        for (std::size_t k = 0; k < n_; ++k) {
            hi[interior[k]] = x.hi[k];
            lo[interior[k]] = x.lo[k];
        }
    }

    bool is_stiff(const Vec& hi, const Vec& lo, int k) const {
        return node_curvature(hi, lo, k) > 1e3 * f_curvature(hi, k);
    }


    std::span<const StarEntry> star(int k) const {
        return std::span<const StarEntry>(star_).subspan(star_start_[k], star_start_[k + 1] - star_start_[k]);
    }

    /// Residual of DOF k with its value shifted by d (same expression as assemble_gradient).
    double node_residual(Vec& hi, Vec& lo, int k, double d) const {
        const Mesh& m = *mesh_;
        const int node = m.interior_nodes()[k];
        const double h0 = hi[node], l0 = lo[node];
        dd_add(hi[node], lo[node], d, 0.0);
        double r = 0.0;
        std::array<double, 3> load{};
        for (const StarEntry& s : star(k)) {
            const Point g = p1_gradient(m, s.element, hi, lo);
            const double a = std::hypot(g[0], g[1]);
            if (a > cfg_.assembly.gradtol && a != 0.0) {
                const Point& bg = m.basis_gradient(s.element, s.local);
                r += std::pow(a, P_.p - 2.0) * m.element_measure(s.element) * (g[0] * bg[0] + g[1] * bg[1]);
            }
            detail::element_load(m, s.element, hi, P_, SelectionRule::pointwise, cfg_.assembly.quad, load);
            r -= load[s.local];
        }
        hi[node] = h0;
        lo[node] = l0;
        return r;
    }

    /// Diagonal entry of the Q_p Hessian at DOF k.
    double node_curvature(const Vec& hi, const Vec& lo, int k) const {
        const Mesh& m = *mesh_;
        double h = 0.0;
        for (const StarEntry& s : star(k)) {
            const Point g = p1_gradient(m, s.element, hi, lo);
            const double a2 = std::max(g[0] * g[0] + g[1] * g[1], 1e-300);
            const Point& bg = m.basis_gradient(s.element, s.local);
            const double gb = g[0] * bg[0] + g[1] * bg[1];
            h += m.element_measure(s.element) * std::pow(a2, 0.5 * (P_.p - 2.0)) *
                 (bg[0] * bg[0] + bg[1] * bg[1] + (P_.p - 2.0) * gb * gb / a2);
        }
        return h;
    }

    /// Bound on the curvature of int F(u) in the direction of the hat at DOF k.
    double f_curvature(const Vec& hi, int k) const {
        const Mesh& m = *mesh_;
        const double u = std::max(hi[m.interior_nodes()[k]], P_.beta);
        double mass = 0.0;
        for (const StarEntry& s : star(k)) mass += m.element_measure(s.element);
        return (P_.q - 1.0) * std::pow(u, P_.q - 2.0) * mass;
    }

    /// Bracketed root with a relative tolerance (the shifts can be far below 1).
    template <class F>
    static double root(F&& f, double a, double fa, double b, double fb) {
        int side = 0;
        for (int it = 0; it < 200; ++it) {
            const double c = (a * fb - b * fa) / (fb - fa);
            if (std::abs(b - a) <= 1e-15 * std::max(std::abs(a), std::abs(b))) return c;
            const double fc = f(c);
            if (fc == 0.0) return c;
            if ((fc > 0.0) == (fa > 0.0)) {
                a = c;
                fa = fc;
                if (side == -1) fb *= 0.5;
                side = -1;
            } else {
                b = c;
                fb = fc;
                if (side == 1) fa *= 0.5;
                side = 1;
            }
        }
        return 0.5 * (a + b);
    }

    SpMat assemble(Metric metric, const DD& x) const {
        const Mesh& mesh = *mesh_;
        const FeField u = field(x);
        const int nv = mesh.nodes_per_element();
        double gmax = 0.0;
        if (metric != Metric::stiffness)
            for (std::size_t e = 0; e < mesh.num_elements(); ++e) gmax = std::max(gmax, bvmp::norm(u.gradient(e)));
        const double eps = cfg_.metric_eps * std::max(gmax, 1e-300);
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(mesh.num_elements() * nv * nv);
        for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
            const Point g = u.gradient(e);
            double A[2][2] = {{1.0, 0.0}, {0.0, 1.0}};
            if (metric != Metric::stiffness) {
                const double a2 = g[0] * g[0] + g[1] * g[1] + eps * eps;
                const double w = std::pow(a2, 0.5 * (P_.p - 2.0));
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        A[i][j] *= w;
                        if (metric == Metric::hessian) A[i][j] += w * (P_.p - 2.0) * g[i] * g[j] / a2;
                    }
            }
            const auto& bg = mesh.basis_gradients(e);
            const Element& el = mesh.elements()[e];
            const double area = mesh.element_measure(e);
            for (int a = 0; a < nv; ++a) {
                const int ia = mesh.dof_index(el[a]);
                if (ia < 0) continue;
                const double Ax = A[0][0] * bg[a][0] + A[0][1] * bg[a][1];
                const double Ay = A[1][0] * bg[a][0] + A[1][1] * bg[a][1];
                for (int b = 0; b < nv; ++b) {
                    const int ib = mesh.dof_index(el[b]);
                    if (ib < 0) continue;
                    trip.emplace_back(ia, ib, area * (Ax * bg[b][0] + Ay * bg[b][1]));
                }
            }
        }
        SpMat M(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
        M.setFromTriplets(trip.begin(), trip.end());
        return M;
    }

    ProblemParams P_;
    MeshPtr mesh_;
    const MpassConfig& cfg_;
    std::size_t n_;
    SpMat stiffness_;
    Eigen::SimplicialLDLT<SpMat> stiffness_solver_;
    Eigen::SimplicialLDLT<SpMat> solver_;
    bool analyzed_ = false;
    std::vector<int> star_start_;
    std::vector<StarEntry> star_;
};

/// Root of a decreasing-through-zero derivative on [a, b] with f(a) > 0 > f(b) (Illinois).
template <class F>
double illinois(F&& f, double a, double fa, double b, double fb) {
    int side = 0;
    for (int it = 0; it < 100; ++it) {
        const double c = (a * fb - b * fa) / (fb - fa);
        const double fc = f(c);
        if (fc == 0.0 || std::abs(b - a) <= 1e-15 * std::max(1.0, std::abs(c))) return c;
        if ((fc > 0.0) == (fa > 0.0)) {
            a = c;
            fa = fc;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            b = c;
            fb = fc;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
    }
    return 0.5 * (a + b);
}

template <class F>
double golden_max(F&& f, double a, double b, int iters) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < iters; ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? c : d;
}

struct PathState {
    std::vector<DD> x;
    Vec E;
};

class Solver {
public:
    Solver(const ProblemParams& P, const MeshPtr& mesh, const FeField& e, const MpassConfig& cfg)
        : P_(P), land_(P, mesh, cfg), cfg_(cfg), e_(e.dofs(), e.low_dofs()) {
        ring_ = eval_mountain_geometry(P, mesh->measure()).r;
    }

    SaddleResult run(int m, const std::optional<Path>& warm) {
        init_path(m, warm);
        SaddleResult res(land_.field(path_.x[1]));
        res.ring_radius = ring_;
        std::vector<double> levels;
        double step = cfg_.step0;
        int stalls = 0;
        for (int it = 0; it < cfg_.max_iter; ++it) {
            const int k = peak_index();
            Vec g = localize_peak(k);
            const DD& x = path_.x[k];
            const double c = path_.E[k];
            update_ring();
            const double J = c - (P_.p - 1.0) / P_.p * land_.mesh().measure();
            if (J < 0.5 * alpha_h_)
                throw Error("collapse", fmt::format("peak level J = {} fell below alpha_h/2 = {} at iteration {} "
                                                    "with {} segments",
                                                    J, 0.5 * alpha_h_, it, m));
            const double resid = sup_norm(g);
            levels.push_back(c);
            res.trace.push_back({it, c, resid, step, k, m});
            const std::size_t nl = levels.size();
            if (resid <= cfg_.eps_g && nl > 5 && std::abs(levels[nl - 1] - levels[nl - 6]) <= cfg_.eps_c * std::max(1.0, std::abs(c))) {
                res.u = land_.field(x);
                res.c = c;
                res.grad_residual = resid;
                res.iterations = it;
                res.lambda_proxy = land_.lambda_proxy(g);
                res.alpha_h = alpha_h_;
                res.segments = m;
                res.tie_nudges = nudges_;
                res.converged = true;
                for (const DD& p : path_.x) {
                    res.path.nodes.push_back(p.hi);
                    res.path.low.push_back(p.lo);
                }
                return res;
            }
            const Vec d = land_.direction(x, g, x.hi);
            double accepted = 0.0;
            // near-flat regions move rigidly first; their internal structure belongs to polish
            if (Vec r = d; land_.rigidify(x, r) && dotv(g, r) < 0.0)
                accepted = peak_search(k, dotv(g, r), r, std::min(cfg_.step_max, 2.0 * step));
            if (const double gd = dotv(g, d); accepted == 0.0 && gd < 0.0)
                accepted = peak_search(k, gd, d, std::min(cfg_.step_max, 2.0 * step));
            if (accepted > 0.0) {
                step = accepted;
                stalls = 0;
            } else if (++stalls > 25) {
                break;
            }
            polish_peak(k);
            relax_string(k);
            reparameterize(peak_index());
        }
        const int k = peak_index();
        const Vec g = land_.grad(path_.x[k]);
        throw Error("budget", fmt::format("no convergence after {} iterations: level {}, residual {} (eps_g {}), "
                                          "{} segments",
                                          res.trace.size(), path_.E[k], sup_norm(g), cfg_.eps_g, m));
    }

private:
    void init_path(int m, const std::optional<Path>& warm) {
        path_.x.clear();
        if (warm && warm->nodes.size() >= 3 && warm->nodes.front().size() == e_.size()) {
            const bool has_low = warm->low.size() == warm->nodes.size();
            for (std::size_t k = 0; k < warm->nodes.size(); ++k)
                path_.x.push_back(has_low ? DD(warm->nodes[k], warm->low[k]) : DD(warm->nodes[k]));
            path_.x.front() = DD(Vec(e_.size(), 0.0));
            path_.x.back() = e_;
            // rescale interior points by the best factor for the old peak under the new parameters
            std::size_t kp = 1;
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 1; k + 1 < path_.x.size(); ++k) {
                const double v = land_.I(path_.x[k]);
                if (v > best) best = v, kp = k;
            }
            const DD peak = path_.x[kp];
            auto f = [&](double lt) { return land_.I(scaled(peak, std::exp(lt))); };
            const double t = std::exp(golden_max(f, std::log(0.25), std::log(4.0), 60));
            for (std::size_t k = 1; k + 1 < path_.x.size(); ++k) path_.x[k] = scaled(path_.x[k], t);
            path_.E.resize(path_.x.size());
            for (std::size_t k = 0; k < path_.x.size(); ++k) path_.E[k] = land_.I(path_.x[k]);
            if (static_cast<int>(path_.x.size()) - 1 != m) {
                const int target = m;
                resample(target, peak_index());
            } else {
                reparameterize(peak_index());
            }
            return;
        }
        path_.x.resize(m + 1);
        path_.E.resize(m + 1);
        for (int k = 0; k <= m; ++k) {
            path_.x[k] = scaled(e_, static_cast<double>(k) / m);
            path_.E[k] = land_.I(path_.x[k]);
        }
    }

    int peak_index() const {
        const int m = static_cast<int>(path_.x.size()) - 1;
        int k = 1;
        for (int j = 2; j < m; ++j)
            if (path_.E[j] > path_.E[k]) k = j;
        return k;
    }

    struct RayMax {
        DD x;
        double E = 0.0;
        Vec g;
    };

    /// Maximum of t -> I(t y) over t > 0 (the fibering maximum through y).
    RayMax ray_max(const DD& y) const {
        auto dphi = [&](double t) { return dotv(land_.grad(scaled(y, t)), y.hi); };
        double lo = 1.0, hi = 1.0;
        double flo = dphi(1.0), fhi = flo;
        if (flo > 0.0) {
            while (fhi > 0.0 && hi < 1e12) {
                lo = hi;
                flo = fhi;
                hi *= 2.0;
                fhi = dphi(hi);
            }
        } else {
            while (flo <= 0.0 && lo > 1e-12) {
                hi = lo;
                fhi = flo;
                lo *= 0.5;
                flo = dphi(lo);
            }
        }
        RayMax r;
        const double t = (flo > 0.0 && fhi <= 0.0) ? (fhi == 0.0 ? hi : illinois(dphi, lo, flo, hi, fhi)) : hi;
        r.x = t == 1.0 ? y : scaled(y, t);
        r.E = land_.I(r.x);
        r.g = land_.grad(r.x);
        return r;
    }

    /// Moves node k to the fibering maximum through it; returns the gradient there.
    Vec localize_peak(int k) {
        RayMax r = ray_max(path_.x[k]);
        path_.x[k] = std::move(r.x);
        path_.E[k] = r.E;
        return r.g;
    }

    /// Nodal relaxation of the stiff part of the peak, then block Newton on it,
    /// kept only if the fibering maximum through the result does not raise the level.
    void polish_peak(int k) {
        DD y = path_.x[k];
        const double before = land_.polish(y, 20, 0.1 * cfg_.eps_g);
        if (before > 0.1 * cfg_.eps_g) land_.block_newton(y, 4);
        if (before == 0.0 || y == path_.x[k]) return;
        RayMax r = ray_max(y);
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(path_.E[k]));
        if (r.E <= path_.E[k] + noise) {
            path_.x[k] = std::move(r.x);
            path_.E[k] = r.E;
        }
    }

    /// Armijo search on the fibering maximum through x + s d.
    double peak_search(int k, double gd, const Vec& d, double s) {
        const DD x = path_.x[k];
        const double E0 = path_.E[k];
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(E0));
        for (int t = 0; t < 60; ++t, s *= cfg_.backtrack) {
            DD y = axpy(x, s, d);
            nudge_ties(y);
            RayMax r = ray_max(y);
            bool ok = false;
            if (std::abs(s * gd) < 1e3 * noise) {
                // energy differences are at round-off: require a smaller residual instead
                const double t = dotv(r.x.hi, y.hi) / std::max(dotv(y.hi, y.hi), 1e-300);
                ok = r.E <= E0 + noise && t * dotv(r.g, d) <= 0.5 * std::abs(gd);
            } else {
                ok = r.E <= E0 + cfg_.armijo * s * gd;
            }
            if (ok) {
                if (r.x == x) return 0.0;  // step below the resolution of x
                path_.x[k] = std::move(r.x);
                path_.E[k] = r.E;
                return s;
            }
        }
        return 0.0;
    }

    double line_search(int k, const Vec& d, double gd, double s) {
        const DD& x = path_.x[k];
        const double E0 = path_.E[k];
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(E0));
        for (int t = 0; t < 60; ++t, s *= cfg_.backtrack) {
            DD y = axpy(x, s, d);
            nudge_ties(y);
            const double Ey = land_.I(y);
            bool ok = Ey <= E0 + cfg_.armijo * s * gd;
            if (!ok && std::abs(s * gd) < 1e3 * noise && Ey <= E0 + noise) {
                // energy differences are at round-off: fall back to a derivative test
                ok = dotv(land_.grad(y), d) <= 0.5 * std::abs(gd);
            }
            if (ok) {
                path_.x[k] = std::move(y);
                path_.E[k] = Ey;
                return s;
            }
        }
        return 0.0;
    }

    /// One projected descent step for every non-peak node above the level of the origin.
    void relax_string(int peak) {
        const int m = static_cast<int>(path_.x.size()) - 1;
        const double floor = path_.E[0];
        double taken = 0.0;
        for (int j = 1; j < m; ++j) {
            if (j == peak || !(path_.E[j] > floor)) continue;
            const Vec g = land_.grad(path_.x[j]);
            const Vec d = land_.direction(path_.x[j], g, diff(path_.x[j + 1], path_.x[j - 1]));
            const double gd = dotv(g, d);
            if (gd < 0.0) taken = std::max(taken, line_search(j, d, gd, std::min(cfg_.step_max, 2.0 * string_step_)));
        }
        if (taken > 0.0) string_step_ = taken;
    }

    void nudge_ties(DD& y) {
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y.hi[i] == P_.beta) {
                y.hi[i] = P_.beta + 1e-12;
                y.lo[i] = 0.0;
                ++nudges_;
            }
    }

    /// Smallest J where the path first crosses ||grad u||_p = r.
    void update_ring() {
        const std::size_t n = path_.x.size();
        double prev = 0.0;
        for (std::size_t k = 1; k < n; ++k) {
            const double nk = land_.norm(path_.x[k]);
            if (nk >= ring_) {
                const DD a = path_.x[k - 1];
                const Vec dv = diff(path_.x[k], a);
                double lo = 0.0, hi = 1.0;
                if (prev < ring_) {
                    for (int it = 0; it < 50; ++it) {
                        const double mid = 0.5 * (lo + hi);
                        if (land_.norm(axpy(a, mid, dv)) < ring_)
                            lo = mid;
                        else
                            hi = mid;
                    }
                }
                alpha_h_ = std::min(alpha_h_, land_.J(axpy(a, hi, dv)));
                return;
            }
            prev = nk;
        }
    }

    /// Redistributes nodes at equal energy arclength on both sides of the peak, keeping it.
    void reparameterize(int k) { resample(static_cast<int>(path_.x.size()) - 1, k); }

    void resample(int m, int k) {
        const int old_m = static_cast<int>(path_.x.size()) - 1;
        std::vector<double> arc(old_m + 1, 0.0);
        for (int j = 1; j <= old_m; ++j) {
            const double dx2 = land_.k_norm2(diff(path_.x[j], path_.x[j - 1]));
            const double dE = path_.E[j] - path_.E[j - 1];
            arc[j] = arc[j - 1] + std::sqrt(dx2 + dE * dE);
        }
        const double total = arc[old_m];
        if (!(total > 0.0)) return;
        int left = static_cast<int>(std::lround(m * arc[k] / total));
        left = std::clamp(left, m / 3, m - m / 3);
        PathState next;
        next.x.resize(m + 1);
        next.E.resize(m + 1);
        auto place = [&](int j0, int j1, double s0, double s1) {
            // nodes j0..j1 (exclusive of the ends) at equal arclength between s0 and s1
            int seg = 0;
            for (int j = j0 + 1; j < j1; ++j) {
                const double s = s0 + (s1 - s0) * (j - j0) / (j1 - j0);
                while (seg + 1 < old_m && arc[seg + 1] < s) ++seg;
                const double len = arc[seg + 1] - arc[seg];
                const double t = len > 0.0 ? std::clamp((s - arc[seg]) / len, 0.0, 1.0) : 0.0;
                next.x[j] = axpy(path_.x[seg], t, diff(path_.x[seg + 1], path_.x[seg]));
                next.E[j] = land_.I(next.x[j]);
            }
        };
        next.x[0] = path_.x[0];
        next.E[0] = path_.E[0];
        next.x[left] = path_.x[k];
        next.E[left] = path_.E[k];
        next.x[m] = path_.x[old_m];
        next.E[m] = path_.E[old_m];
        place(0, left, 0.0, arc[k]);
        place(left, m, arc[k], total);
        path_ = std::move(next);
    }

    ProblemParams P_;
    Landscape land_;
    const MpassConfig& cfg_;
    DD e_;
    PathState path_;
    double ring_ = 0.0;
    double alpha_h_ = std::numeric_limits<double>::infinity();
    int nudges_ = 0;
    double string_step_ = 1.0;
};

}  // namespace

SaddleResult mountain_pass_solve(const ProblemParams& params, const MeshPtr& mesh, const FeField& e,
                                 const MpassConfig& cfg, const std::optional<Path>& warm) {
    validate(params);
    validate(cfg);
    if (&e.mesh() != mesh.get()) throw Error("invalid_argument", "endpoint must live on the solve mesh");
    if (mesh->num_dofs() == 0) throw Error("invalid_argument", "mesh has no interior degree of freedom");
    int m = cfg.m;
    for (int attempt = 0;; ++attempt) {
        Solver solver(params, mesh, e, cfg);
        try {
            SaddleResult r = solver.run(m, attempt == 0 ? warm : std::nullopt);
            r.densifications = attempt;
            return r;
        } catch (const Error& err) {
            if (err.code() != "collapse" || attempt >= cfg.max_densify) throw;
            m *= 2;
        }
    }
}

OracleResult brute_saddle_oracle(const ProblemParams& params, const MeshPtr& mesh, const FeField& e, int grid,
                                 const AssemblyOptions& opt) {
    const std::size_t n = mesh->num_dofs();
    if (n == 0 || n > 2)
        throw Error("invalid_argument", fmt::format("oracle needs 1 or 2 interior DOFs (mesh has {})", n));
    if (grid < 3) throw Error("invalid_argument", "oracle grid must have at least 3 points per axis");
    const Vec ed = e.dofs();
    auto I = [&](const Vec& x) { return eval_I(FeField::from_dofs(mesh, x), params, opt).I; };
    OracleResult out;
    if (n == 1) {
        std::vector<double> vals(grid);
        for (int i = 0; i < grid; ++i) vals[i] = I({ed[0] * i / (grid - 1.0)});
        const int best = static_cast<int>(std::max_element(vals.begin(), vals.end()) - vals.begin());
        const double lo = ed[0] * std::max(best - 1, 0) / (grid - 1.0);
        const double hi = ed[0] * std::min(best + 1, grid - 1) / (grid - 1.0);
        const double t = golden_max([&](double s) { return I({s}); }, lo, hi, 80);
        out.level = std::max(I({t}), vals[best]);
        out.argmax = {t};
        double osc = 0.0;
        for (int i = std::max(best - 1, 0); i < std::min(best + 1, grid - 1); ++i)
            osc = std::max(osc, std::abs(vals[i + 1] - vals[i]));
        out.tolerance = osc;
        return out;
    }
    const int G = grid;
    std::vector<double> V(static_cast<std::size_t>(G) * G);
    auto at = [&](int i, int j) -> double& { return V[static_cast<std::size_t>(i) * G + j]; };
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) at(i, j) = I({ed[0] * i / (G - 1.0), ed[1] * j / (G - 1.0)});
    std::vector<double> B(V.size());
    auto bt = [&](int i, int j) -> double& { return B[static_cast<std::size_t>(i) * G + j]; };
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) {
            double from = -std::numeric_limits<double>::infinity();
            if (i > 0 && j > 0)
                from = std::min(bt(i - 1, j), bt(i, j - 1));
            else if (i > 0)
                from = bt(i - 1, j);
            else if (j > 0)
                from = bt(i, j - 1);
            bt(i, j) = std::max(at(i, j), from);
        }
    out.level = bt(G - 1, G - 1);
    double osc = 0.0;
    for (int i = 0; i + 1 < G; ++i)
        for (int j = 0; j + 1 < G; ++j) {
            const double a = at(i, j), b = at(i + 1, j), c = at(i, j + 1), d = at(i + 1, j + 1);
            osc = std::max(osc, std::max({a, b, c, d}) - std::min({a, b, c, d}));
        }
    out.tolerance = osc;
    // locate a grid node attaining the bottleneck value on an optimal path
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j)
            if (at(i, j) == out.level && out.argmax.empty())
                out.argmax = {ed[0] * i / (G - 1.0), ed[1] * j / (G - 1.0)};
    return out;
}

}  // namespace bvmp
