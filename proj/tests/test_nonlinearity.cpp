#include "bvmp/energy.hpp"
#include "bvmp/error.hpp"
#include "bvmp/nonlinearity.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace bvmp;

namespace {
ProblemParams params(double q, double beta, int dim = 2) {
    ProblemParams P;
    P.dim = dim;
    P.q = q;
    P.beta = beta;
    P.p = P.p_bar = 1.25;
    return P;
}

// composite Simpson on [a, b] with the kink at beta as a panel edge
double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}
}  // namespace

TEST_CASE("heaviside") {
    CHECK(heaviside(0.0) == 1);
    CHECK(heaviside(-1e-15) == 0);
    CHECK(heaviside(3.2) == 1);
}

TEST_CASE("f_beta and F_beta values") {
    const ProblemParams P = params(1.5, 1.0);
    CHECK(f_beta(0.5, P) == 0.0);
    CHECK(f_beta(1.0, P) == 1.0);
    CHECK(f_beta(4.0, P) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(F_beta(1.0, P) == 0.0);
    CHECK(F_beta(-5.0, P) == 0.0);
    const double exact = (std::pow(2.0, 1.5) - 1.0) / 1.5;
    CHECK(F_beta(2.0, P) == doctest::Approx(exact).epsilon(1e-15));
    const double quad = simpson([&](double s) { return f_beta(s, P); }, 1.0, 2.0);
    CHECK(F_beta(2.0, P) == doctest::Approx(quad).epsilon(1e-10));
    CHECK(F_beta(2.0, P) == doctest::Approx(1.21895).epsilon(1e-5));
    for (double b : {0.3, 0.77}) CHECK(F_beta(b, params(1.7, b)) == 0.0);
}

TEST_CASE("Clarke interval") {
    const ProblemParams P = params(1.5, 1.0);
    auto c = clarke_interval(0.5, P);
    CHECK(c.lo == 0.0);
    CHECK(c.hi == 0.0);
    c = clarke_interval(1.0, P);
    CHECK(c.lo == 0.0);
    CHECK(c.hi == 1.0);
    c = clarke_interval(4.0, P);
    CHECK(c.lo == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(c.hi == c.lo);
    CHECK(c.violation(2.5) == doctest::Approx(0.5));
}

TEST_CASE("envelope, primitive and beta monotonicity on a sample") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> qd(1.05, 1.95), bd(0.0, 2.0), td(-3.0, 6.0);
    for (int k = 0; k < 2000; ++k) {
        const double q = qd(rng), b1 = bd(rng), b2 = bd(rng), t = td(rng);
        const ProblemParams P = params(q, b1);
        const ClarkeInterval c = clarke_interval(t, P);
        CHECK(c.lo <= f_beta(t, P));
        CHECK(f_beta(t, P) <= c.hi);
        for (auto rule : {SelectionRule::pointwise, SelectionRule::lower, SelectionRule::upper})
            CHECK(c.violation(select(t, P, rule)) == 0.0);
        if (t > b1) {
            const double F0 = std::pow(t, q) / q;
            CHECK(F_beta(t, P) == doctest::Approx(F0 - std::pow(b1, q) / q).epsilon(1e-12));
        }
        const double lo = std::min(b1, b2), hi = std::max(b1, b2);
        CHECK(F_beta(t, params(q, lo)) >= F_beta(t, params(q, hi)));
        CHECK(F_beta(t + 0.1, P) >= F_beta(t, P));
    }
    // continuity across the threshold
    const ProblemParams P = params(1.5, 0.8);
    CHECK(std::abs(F_beta(0.8 + 1e-12, P) - F_beta(0.8 - 1e-12, P)) < 1e-11);
}

TEST_CASE("mollified H stays inside the envelope away from the ramp") {
    const ProblemParams P = params(1.5, 1.0);
    CHECK(f_beta_mollified(0.5, P, 0.1) == 0.0);
    CHECK(f_beta_mollified(2.0, P, 0.1) == doctest::Approx(f_beta(2.0, P)));
    const double mid = f_beta_mollified(1.0, P, 0.1);
    CHECK(mid > 0.0);
    CHECK(mid < 1.0);
}

TEST_CASE("selection fields at ties and off the threshold") {
    const MeshPtr m = build_rect_mesh(1.0, 1.0, 4, 4);
    const double beta = 0.3, q = 1.5;
    const ProblemParams P = params(q, beta);
    auto constant = [&](double c) { return FeField::interpolate(m, [c](const Point&) { return c; }, false); };

    const SelectionField zero = selection_rho(FeField::zeros(m), P);
    for (double r : zero.nodal()) CHECK(r == 0.0);
    for (double l : zero.load()) CHECK(l == 0.0);

    const SelectionField lower = selection_rho(constant(beta), P, SelectionRule::lower);
    const SelectionField upper = selection_rho(constant(beta), P, SelectionRule::upper);
    for (double r : lower.nodal()) CHECK(r == 0.0);
    for (double r : upper.nodal()) CHECK(r == doctest::Approx(std::pow(beta, q - 1)).epsilon(1e-15));

    for (auto rule : {SelectionRule::pointwise, SelectionRule::lower, SelectionRule::upper}) {
        const SelectionField s = selection_rho(constant(2 * beta), P, rule);
        for (double r : s.nodal()) CHECK(r == doctest::Approx(std::pow(2 * beta, q - 1)).epsilon(1e-15));
        for (const auto& smp : s.samples()) CHECK(smp.rho == doctest::Approx(std::pow(2 * beta, q - 1)).epsilon(1e-15));
    }
    CHECK(parse_selection_rule("upper") == SelectionRule::upper);
    CHECK(to_string(SelectionRule::lower) == "lower");
    CHECK_THROWS_AS(parse_selection_rule("middle"), Error);
}

TEST_CASE("AR surplus on constant fields") {
    // int((1/q) rho u - F_beta(u)) = (beta/q) int_{u = beta} rho + (beta^q/q) |{u > beta}|
    const MeshPtr m = build_rect_mesh(1.0, 1.0, 3, 3);
    const double beta = 0.4, q = 1.6;
    const ProblemParams P = params(q, beta);
    for (double c : {0.1, beta, 0.9, 2.5}) {
        for (auto rule : {SelectionRule::pointwise, SelectionRule::lower, SelectionRule::upper}) {
            const FeField u = FeField::interpolate(m, [c](const Point&) { return c; }, false);
            const SelectionField s = selection_rho(u, P, rule);
            double rho_u = 0.0, rho_int = 0.0;
            for (std::size_t i = 0; i < m->num_nodes(); ++i) {
                rho_u += s.load()[i] * u[i];
                rho_int += s.load()[i];
            }
            const double lhs = rho_u / q - eval_F_integral(u, P);
            const double rhs = (c == beta ? beta / q * rho_int : 0.0) + (c > beta ? std::pow(beta, q) / q : 0.0);
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
            CHECK(lhs >= -1e-15);
        }
    }
}
