#include "glued/capacity.hpp"
#include "glued/spectral.hpp"
#include "glued/stochastic.hpp"

#include <benchmark/benchmark.h>

using namespace glued;

namespace {

WeightedComplex weighted_example(std::size_t level)
{
    return WeightedComplex(glue({build_disk_piece(1.0, level),
                                 build_segment_piece(2.0, 2 * level, Placement::along(Vec3(0, 0, -1), Vec3::UnitZ()))}),
                           {WeightSpec::power("disk", "disk:segment", 1.0)});
}

void BM_Assemble(benchmark::State& state)
{
    const auto wc = weighted_example(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(assemble(wc));
    state.counters["dofs"] = static_cast<double>(wc.complex().dof_count());
}
BENCHMARK(BM_Assemble)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Eigen(benchmark::State& state)
{
    const auto sys = assemble(weighted_example(static_cast<std::size_t>(state.range(0))));
    for (auto _ : state) benchmark::DoNotOptimize(eigen(sys, 4));
}
BENCHMARK(BM_Eigen)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_HeatStep(benchmark::State& state)
{
    const auto sys = assemble(weighted_example(static_cast<std::size_t>(state.range(0))));
    const ImplicitEuler step(sys, 1e-3);
    Vector u(static_cast<Eigen::Index>(sys.dof_count()));
    for (Dof d = 0; d < sys.dof_count(); ++d) u[static_cast<Eigen::Index>(d)] = sys.complex().position(d).x();
    for (auto _ : state) benchmark::DoNotOptimize(u = step.step(u));
}
BENCHMARK(BM_HeatStep)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_Capacity(benchmark::State& state)
{
    const auto sys = assemble(weighted_example(static_cast<std::size_t>(state.range(0))));
    const auto& L = sys.complex().intersection("disk:segment").dofs;
    const auto d = distances_from(sys.complex(), L);
    const auto K = closed_sublevel(d, 0.1), Omega = open_sublevel(d, 0.8);
    for (auto _ : state) benchmark::DoNotOptimize(relative_capacity(sys, K, Omega));
}
BENCHMARK(BM_Capacity)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Walk(benchmark::State& state)
{
    const auto sys = assemble(weighted_example(16));
    const auto chain = build_chain(sys, 1);
    std::uint64_t i = 0;
    std::size_t jumps = 0;
    for (auto _ : state) {
        const auto tr = sample_path(chain, 0, 1.0, path_seed(1, i++), {false, false});
        jumps += tr.jumps;
    }
    state.counters["jumps/s"] = benchmark::Counter(static_cast<double>(jumps), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Walk)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
