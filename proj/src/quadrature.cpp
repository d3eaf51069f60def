#include "bvmp/quadrature.hpp"

#include "bvmp/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace bvmp {

namespace {

void add_orbit3(TriangleRule& r, double a, double b, double w) {
    r.points.push_back({a, b, b});
    r.points.push_back({b, a, b});
    r.points.push_back({b, b, a});
    for (int k = 0; k < 3; ++k) r.weights.push_back(w);
}

std::array<TriangleRule, 4> make_triangle_rules() {
    std::array<TriangleRule, 4> rules;
    // 1 point
    rules[0].points = {{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    rules[0].weights = {1.0};
    rules[0].degree = 1;
    // 3 points
    add_orbit3(rules[1], 2.0 / 3, 1.0 / 6, 1.0 / 3);
    rules[1].degree = 2;
    // 6 points (Dunavant)
    add_orbit3(rules[2], 0.108103018168070227360, 0.445948490915964886320, 0.223381589678011465945);
    add_orbit3(rules[2], 0.816847572980458513080, 0.091576213509770743460, 0.109951743655321867388);
    rules[2].degree = 4;
    // 7 points (Radon)
    const double s15 = std::sqrt(15.0);
    rules[3].points = {{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    rules[3].weights = {9.0 / 40};
    add_orbit3(rules[3], (9.0 + 2.0 * s15) / 21.0, (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
    add_orbit3(rules[3], (9.0 - 2.0 * s15) / 21.0, (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
    rules[3].degree = 5;
    return rules;
}

LineRule make_gauss_legendre(int n) {
    LineRule r;
    r.points.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        r.points[n - 1 - i] = 0.5 * (x + 1.0);
        r.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
}

double det3(const std::array<Bary, 3>& v) {
    return v[0][0] * (v[1][1] * v[2][2] - v[1][2] * v[2][1]) - v[0][1] * (v[1][0] * v[2][2] - v[1][2] * v[2][0]) +
           v[0][2] * (v[1][0] * v[2][1] - v[1][1] * v[2][0]);
}

}  // namespace

const TriangleRule& triangle_rule(int points) {
    static const std::array<TriangleRule, 4> rules = make_triangle_rules();
    switch (points) {
        case 1: return rules[0];
        case 3: return rules[1];
        case 6: return rules[2];
        case 7: return rules[3];
        default: throw Error("invalid_argument", fmt::format("no {}-point triangle rule (use 1, 3, 6 or 7)", points));
    }
}

const LineRule& gauss_legendre(int points) {
    static const std::vector<LineRule> rules = [] {
        std::vector<LineRule> v;
        v.push_back({});
        for (int n = 1; n <= 32; ++n) v.push_back(make_gauss_legendre(n));
        return v;
    }();
    if (points < 1 || points > 32) throw Error("invalid_argument", "Gauss-Legendre size must be in [1, 32]");
    return rules[points];
}

int clip_above(const std::array<double, 3>& values, double level, std::array<SubTriangle, 2>& out) {
    static constexpr std::array<Bary, 3> corners{Bary{1, 0, 0}, Bary{0, 1, 0}, Bary{0, 0, 1}};
    const bool all_in = values[0] > level && values[1] > level && values[2] > level;
    if (all_in) {
        out[0] = {corners, 1.0};
        return 1;
    }
    std::array<Bary, 4> poly{};
    int np = 0;
    for (int k = 0; k < 3; ++k) {
        const int a = (k + 2) % 3;  // previous vertex
        const int b = k;
        const bool in_a = values[a] > level;
        const bool in_b = values[b] > level;
        if (in_a != in_b) {
            const double t = (values[a] - level) / (values[a] - values[b]);
            Bary x{};
            for (int j = 0; j < 3; ++j) x[j] = (1.0 - t) * corners[a][j] + t * corners[b][j];
            poly[np++] = x;
        }
        if (in_b) poly[np++] = corners[b];
    }
    if (np < 3) return 0;
    int count = 0;
    for (int k = 1; k + 1 < np; ++k) {
        SubTriangle s{{poly[0], poly[k], poly[k + 1]}, 0.0};
        s.fraction = std::abs(det3(s.vertices));
        out[count++] = s;
    }
    return count;
}

int clip_below(const std::array<double, 3>& values, double level, std::array<SubTriangle, 2>& out) {
    return clip_above({-values[0], -values[1], -values[2]}, -level, out);
}

bool clip_interval_above(double ua, double ub, double level, double& t0, double& t1) {
    const bool in_a = ua > level;
    const bool in_b = ub > level;
    if (in_a && in_b) {
        t0 = 0.0;
        t1 = 1.0;
        return true;
    }
    if (!in_a && !in_b) return false;
    const double t = (ua - level) / (ua - ub);
    if (in_a) {
        t0 = 0.0;
        t1 = t;
    } else {
        t0 = t;
        t1 = 1.0;
    }
    return t1 > t0;
}

bool clip_interval_below(double ua, double ub, double level, double& t0, double& t1) {
    return clip_interval_above(-ua, -ub, -level, t0, t1);
}

void detail::refine_once(const SubTriangle& parent, std::array<SubTriangle, 4>& children) {
    const auto& v = parent.vertices;
    auto mid = [](const Bary& a, const Bary& b) {
        return Bary{0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])};
    };
    const Bary m01 = mid(v[0], v[1]), m12 = mid(v[1], v[2]), m20 = mid(v[2], v[0]);
    const double f = 0.25 * parent.fraction;
    children[0] = {{v[0], m01, m20}, f};
    children[1] = {{m01, v[1], m12}, f};
    children[2] = {{m20, m12, v[2]}, f};
    children[3] = {{m01, m12, m20}, f};
}

double mean_power(double a, double b, double k) {
    const double hi = std::max(a, b);
    const double lo = std::min(a, b);
    if (hi <= 0.0) return k == 0.0 ? 1.0 : 0.0;
    const double delta = (lo - hi) / hi;
    const double hik = std::pow(hi, k);
    if (delta == 0.0) return hik;
    if (delta <= -1.0) return hik / (k + 1.0);
    const double x = (k + 1.0) * std::log1p(delta);
    return hik * std::expm1(x) / ((k + 1.0) * delta);
}

double first_moment_power(double a, double b, double k) {
    const double hi = std::max(a, b);
    if (hi <= 0.0) return k == 0.0 ? 0.5 : 0.0;
    const double d = b - a;
    if (std::abs(d) <= 0.25 * hi) {
        const LineRule& gl = gauss_legendre(16);
        double sum = 0.0;
        for (std::size_t i = 0; i < gl.points.size(); ++i) {
            const double s = gl.points[i];
            sum += gl.weights[i] * s * std::pow(a + d * s, k);
        }
        return sum;
    }
    const double t2 = (std::pow(b, k + 2.0) - std::pow(a, k + 2.0)) / (k + 2.0);
    const double t1 = a * (std::pow(b, k + 1.0) - std::pow(a, k + 1.0)) / (k + 1.0);
    return (t2 - t1) / (d * d);
}

double interval_abs_power(double ua, double ub, double r, double length) {
    if ((ua >= 0.0 && ub >= 0.0) || (ua <= 0.0 && ub <= 0.0))
        return length * mean_power(std::abs(ua), std::abs(ub), r);
    const double t = ua / (ua - ub);
    return length * (t * std::pow(std::abs(ua), r) + (1.0 - t) * std::pow(std::abs(ub), r)) / (r + 1.0);
}

}  // namespace bvmp
