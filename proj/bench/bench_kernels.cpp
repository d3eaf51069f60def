// Serial reference against the OpenMP element loops, on a smooth nonnegative
// field of the kind the solver sees (a bump crossing the threshold).
// Second benchmark argument: 0 = serial, 1 = parallel.

#include "bvmp/energy.hpp"
#include "bvmp/kernels.hpp"
#include "bvmp/mesh.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

using namespace bvmp;

namespace {

const FeField& field(int n) {
    static std::map<int, FeField> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        const MeshPtr m = build_rect_mesh(1.0, 1.0, n, n);
        FeField u = FeField::interpolate(
            m, [](const Point& x) { return 3.0 * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]); }, true);
        it = cache.emplace(n, std::move(u)).first;
    }
    return it->second;
}

ProblemParams params() {
    ProblemParams P;
    P.q = 1.5;
    P.p = P.p_bar = 1.25;
    P.beta = 0.4;
    return P;
}

void finish(benchmark::State& s, const FeField& u) {
    const bool par = s.range(1) != 0;
    s.SetLabel(par ? "parallel x" + std::to_string(max_threads()) : "serial");
    s.SetItemsProcessed(static_cast<int64_t>(s.iterations() * u.mesh().num_elements()));
}

void BM_grad_power_sum(benchmark::State& s) {
    const FeField& u = field(static_cast<int>(s.range(0)));
    const Exec ex = s.range(1) ? Exec::parallel : Exec::serial;
    for (auto _ : s) benchmark::DoNotOptimize(kernels::grad_power_sum(u, 1.25, ex));
    finish(s, u);
}

void BM_F_integral(benchmark::State& s) {
    const FeField& u = field(static_cast<int>(s.range(0)));
    const Exec ex = s.range(1) ? Exec::parallel : Exec::serial;
    const ProblemParams P = params();
    for (auto _ : s) benchmark::DoNotOptimize(kernels::F_integral(u, P, Quadrature{}, ex));
    finish(s, u);
}

void BM_flux_residual(benchmark::State& s) {
    const FeField& u = field(static_cast<int>(s.range(0)));
    const Exec ex = s.range(1) ? Exec::parallel : Exec::serial;
    std::vector<double> out;
    for (auto _ : s) {
        kernels::flux_residual(u, 1.25, 0.0, ex, out);
        benchmark::DoNotOptimize(out.data());
    }
    finish(s, u);
}

void BM_load_vector(benchmark::State& s) {
    const FeField& u = field(static_cast<int>(s.range(0)));
    const Exec ex = s.range(1) ? Exec::parallel : Exec::serial;
    const ProblemParams P = params();
    std::vector<double> out;
    for (auto _ : s) {
        kernels::load_vector(u, P, SelectionRule::pointwise, Quadrature{}, ex, out);
        benchmark::DoNotOptimize(out.data());
    }
    finish(s, u);
}

void BM_superlevel(benchmark::State& s) {
    const FeField& u = field(static_cast<int>(s.range(0)));
    const Exec ex = s.range(1) ? Exec::parallel : Exec::serial;
    for (auto _ : s) benchmark::DoNotOptimize(kernels::superlevel_measure(u, 0.4, ex));
    finish(s, u);
}

// the full residual the solver evaluates at every trial point
void BM_assemble_gradient(benchmark::State& s) {
    const FeField& u = field(static_cast<int>(s.range(0)));
    AssemblyOptions opt;
    opt.exec = s.range(1) ? Exec::parallel : Exec::serial;
    const ProblemParams P = params();
    for (auto _ : s) benchmark::DoNotOptimize(assemble_gradient(u, P, SelectionRule::pointwise, opt).max_abs());
    finish(s, u);
}

void sizes(benchmark::internal::Benchmark* b) {
    for (int n : {32, 64, 128})
        for (int par : {0, 1}) b->Args({n, par});
    b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_grad_power_sum)->Apply(sizes);
BENCHMARK(BM_F_integral)->Apply(sizes);
BENCHMARK(BM_flux_residual)->Apply(sizes);
BENCHMARK(BM_load_vector)->Apply(sizes);
BENCHMARK(BM_superlevel)->Apply(sizes);
BENCHMARK(BM_assemble_gradient)->Apply(sizes);

BENCHMARK_MAIN();
