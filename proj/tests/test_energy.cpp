#include "bvmp/energy.hpp"
#include "bvmp/kernels.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace bvmp;

namespace {
ProblemParams params(double p, double q, double beta, int dim = 2) {
    ProblemParams P;
    P.dim = dim;
    P.p = p;
    P.p_bar = std::max(p, 1.25);
    P.q = q;
    P.beta = beta;
    return P;
}

FeField hat(const MeshPtr& m, double peak) {
    return FeField::interpolate(m, [peak](const Point& x) { return peak * (1.0 - std::abs(2.0 * x[0] - 1.0)); }, true);
}

FeField random_field(const MeshPtr& m, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(m->num_dofs());
    for (double& x : v) x = d(rng);
    return FeField::from_dofs(m, v);
}

}  // namespace

TEST_CASE("Q_p on hand-integrable fields") {
    const MeshPtr line = build_interval_mesh(1.0, 2);
    CHECK(eval_Qp(FeField::zeros(line), 1.5) == 0.0);
    for (double p : {1.1, 1.5, 2.0})
        CHECK(eval_Qp(hat(line, 1.0), p) == doctest::Approx(std::pow(2.0, p) / p).epsilon(1e-14));
    CHECK(eval_Qp(hat(line, 1.0), 2.0) == doctest::Approx(2.0).epsilon(1e-15));
    const MeshPtr fine = build_interval_mesh(1.0, 7);
    const FeField ramp = FeField::interpolate(fine, [](const Point& x) { return x[0]; }, false);
    CHECK(eval_Qp(ramp, 1.3) == doctest::Approx(1.0 / 1.3).epsilon(1e-14));
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 5, 5);
    const FeField ramp2 = FeField::interpolate(sq, [](const Point& x) { return x[1]; }, false);
    CHECK(eval_Qp(ramp2, 1.7) == doctest::Approx(1.0 / 1.7).epsilon(1e-13));
}

TEST_CASE("F integral against closed forms and quadrature") {
    const MeshPtr line = build_interval_mesh(1.0, 2);
    const ProblemParams P = params(1.5, 1.5, 1.0, 1);
    CHECK(eval_F_integral(FeField::zeros(line), P) == 0.0);
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 4, 4);
    const double c = 1.7;
    const FeField cst = FeField::interpolate(sq, [c](const Point&) { return c; }, false);
    CHECK(eval_F_integral(cst, params(1.5, 1.5, 1.0)) == doctest::Approx((std::pow(c, 1.5) - 1.0) / 1.5).epsilon(1e-13));

    // hat of peak 2: u = 4x on [0, 1/2], crossing beta = 1 at x = 1/4
    auto g = [&](double x) { return F_beta(4.0 * x, P); };
    const double reference = 2.0 * (oracle::adaptive_simpson(g, 0.0, 0.25) + oracle::adaptive_simpson(g, 0.25, 0.5));
    CHECK(eval_F_integral(hat(line, 2.0), P) == doctest::Approx(reference).epsilon(1e-10));
}

TEST_CASE("2D F integral against the divided-difference closed form") {
    // the 7-point rule on clipped pieces converges like h^6; three refinements reach rounding level
    const ProblemParams P = params(1.25, 1.4, 0.35);
    std::mt19937_64 rng(3);
    for (int n : {6, 16}) {
        const MeshPtr sq = build_rect_mesh(1.0, 1.0, n, n);
        for (int k = 0; k < 3; ++k) {
            const FeField u = random_field(sq, rng, 0.0, 1.0);
            const double exact = oracle::F_integral_2d(u, P.q, P.beta);
            AssemblyOptions fine;
            fine.quad.refine = 3;
            CHECK(eval_F_integral(u, P, fine) == doctest::Approx(exact).epsilon(1e-10));
            CHECK(eval_F_integral(u, P) == doctest::Approx(exact).epsilon(2e-6));
        }
    }
}

TEST_CASE("I = J + (p-1)/p |Omega|") {
    const MeshPtr sq = build_rect_mesh(2.0, 1.0, 4, 4);
    const ProblemParams P = params(1.25, 1.5, 0.2);
    const EnergyReport z = eval_I(FeField::zeros(sq), P);
    CHECK(z.J == 0.0);
    CHECK(z.I == doctest::Approx(0.25 / 1.25 * 2.0).epsilon(1e-15));
    std::mt19937_64 rng(11);
    const FeField u = random_field(sq, rng, 0.0, 1.0);
    double prev = INFINITY;
    for (double p : {1.25, 1.1, 1.01, 1.001}) {
        const EnergyReport r = eval_I(u, params(p, 1.5, 0.2));
        const double gap = r.I - r.J;
        CHECK(gap == doctest::Approx((p - 1) / p * 2.0).epsilon(1e-12));
        CHECK(gap < prev);
        prev = gap;
    }
    // hat of peak 2 on [0, 1]: both parts against the 1D oracles
    const MeshPtr line = build_interval_mesh(1.0, 2);
    const ProblemParams P1 = params(1.5, 1.5, 1.0, 1);
    const EnergyReport h = eval_I(hat(line, 2.0), P1);
    CHECK(h.Qp == doctest::Approx(std::pow(4.0, 1.5) / 1.5).epsilon(1e-14));
    CHECK(h.J == doctest::Approx(h.Qp - h.Fint).epsilon(1e-15));
}

TEST_CASE("gradient matches central differences of J") {
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 5, 5);
    std::mt19937_64 rng(5);
    for (int k = 0; k < 5; ++k) {
        const ProblemParams P = params(1.25, 1.5, 0.37);
        const FeField u = random_field(sq, rng, 0.0, 1.0);
        const GradientResult g = assemble_gradient(u, P);
        REQUIRE(g.tie_nodes.empty());
        const double h = 1e-6, scale = g.max_abs();
        auto dofs = u.dofs();
        for (std::size_t i = 0; i < dofs.size(); ++i) {
            auto a = dofs, b = dofs;
            a[i] += h;
            b[i] -= h;
            const double fd = (eval_J(FeField::from_dofs(sq, a), P) - eval_J(FeField::from_dofs(sq, b), P)) / (2 * h);
            CHECK(std::abs(fd - g.dofs(*sq)[i]) <= 1e-5 * scale);
        }
    }
    CHECK(assemble_gradient(FeField::zeros(sq), params(1.25, 1.5, 0.1)).max_abs() == 0.0);
}

TEST_CASE("mountain geometry constants") {
    const ProblemParams P = params(1.25, 1.5, 0.2);
    const GeometryConstants g = eval_mountain_geometry(P, 1.0);
    const long double C = std::pow(1.25L / (std::sqrt(2.0L) * 0.75L), 1.5L);
    const long double r = std::pow(1.0L / (1.25L * C + 1.0L), 1.0L / 0.25L);
    const long double alpha = std::pow(r, 1.5L) / 1.25L;
    CHECK(g.C_geom == doctest::Approx(static_cast<double>(C)).epsilon(1e-14));
    CHECK(g.r == doctest::Approx(static_cast<double>(r)).epsilon(1e-13));
    CHECK(g.alpha == doctest::Approx(static_cast<double>(alpha)).epsilon(1e-13));

    const GeometryConstants a = eval_mountain_geometry(params(1.25, 1.5, 0.1), 1.0);
    const GeometryConstants b = eval_mountain_geometry(params(1.25, 1.5, 0.9), 1.0);
    CHECK(a.alpha == b.alpha);
    CHECK(a.r == b.r);
    for (double q : {1.3, 1.6, 1.9})
        for (double pb : {1.05, 1.2, 1.29})
            for (double m : {0.5, 1.0, 3.0}) {
                ProblemParams Q = params(pb, q, 0.2);
                Q.p_bar = pb;
                CHECK(eval_mountain_geometry(Q, m).alpha > 0.0);
            }
}

TEST_CASE("Sobolev inequality on sample fields") {
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 6, 6);
    const ProblemParams P = params(1.25, 1.5, 0.2);
    const SobolevReport z = sobolev_check(FeField::zeros(sq), P);
    CHECK(z.lhs == 0.0);
    CHECK(z.holds);
    std::mt19937_64 rng(17);
    for (int k = 0; k < 10; ++k) CHECK(sobolev_check(random_field(sq, rng, -1.0, 1.0), P).holds);
    const MeshPtr line = build_interval_mesh(1.0, 4);
    const SobolevReport h = sobolev_check(hat(line, 1.0), params(1.25, 1.5, 0.2, 1));
    CHECK(h.model);
    CHECK(h.lhs == doctest::Approx(1.0));
    CHECK(h.holds);
}

TEST_CASE("scaling and ordering properties") {
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 6, 6);
    std::mt19937_64 rng(23);
    for (int k = 0; k < 20; ++k) {
        const FeField u = random_field(sq, rng, 0.0, 2.0);
        for (double t : {0.5, 3.0})
            CHECK(eval_Qp(u.scaled(t), 1.3) == doctest::Approx(std::pow(t, 1.3) * eval_Qp(u, 1.3)).epsilon(1e-12));
        CHECK(eval_I(u, params(1.1, 1.5, 0.3)).I <= eval_I(u, params(1.2, 1.5, 0.3)).I + 1e-12);
        CHECK(eval_I(u, params(1.2, 1.5, 0.1)).I <= eval_I(u, params(1.2, 1.5, 0.6)).I + 1e-12);
    }
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
    set_threads(4);
    const MeshPtr sq = build_rect_mesh(1.0, 1.0, 24, 24);
    std::mt19937_64 rng(31);
    const FeField u = random_field(sq, rng, 0.0, 1.0);
    const ProblemParams P = params(1.2, 1.5, 0.4);
    const Quadrature quad{};
    using namespace kernels;
    CHECK(grad_power_sum(u, 1.2, Exec::serial) == grad_power_sum(u, 1.2, Exec::parallel));
    CHECK(grad_norm_sum(u, Exec::serial) == grad_norm_sum(u, Exec::parallel));
    CHECK(F_integral(u, P, quad, Exec::serial) == F_integral(u, P, quad, Exec::parallel));
    CHECK(abs_power_integral(u, 1.2, quad, Exec::serial) == abs_power_integral(u, 1.2, quad, Exec::parallel));
    CHECK(superlevel_measure(u, 0.4, Exec::serial) == superlevel_measure(u, 0.4, Exec::parallel));
    std::vector<double> a, b;
    flux_residual(u, 1.2, 0.0, Exec::serial, a);
    flux_residual(u, 1.2, 0.0, Exec::parallel, b);
    CHECK(a == b);
    load_vector(u, P, SelectionRule::pointwise, quad, Exec::serial, a);
    load_vector(u, P, SelectionRule::pointwise, quad, Exec::parallel, b);
    CHECK(a == b);
    AssemblyOptions s, par;
    s.exec = Exec::serial;
    CHECK(assemble_gradient(u, P, SelectionRule::pointwise, s).nodal ==
          assemble_gradient(u, P, SelectionRule::pointwise, par).nodal);
    set_threads(0);
}

TEST_CASE("L^r distances") {
    const MeshPtr line = build_interval_mesh(1.0, 2);
    const FeField u = hat(line, 1.0);
    CHECK(lr_norm(u, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(lr_distance(u, u, 1.2) == 0.0);
    CHECK(lr_distance(u, FeField::zeros(line), 1.0) == doctest::Approx(0.5).epsilon(1e-14));
}
