#include <benchmark/benchmark.h>

#include "qtinv/factorize.hpp"
#include "qtinv/genmat.hpp"

namespace {

template <class Run>
void factorize_chain(benchmark::State& state, Run run) {
  qtinv::GenSpec spec;
  spec.set_order(static_cast<int>(state.range(0)));
  const auto entries = qtinv::generate_entries(spec);
  qtinv::RefinementParams params;
  for (auto _ : state) {
    state.PauseTiming();
    qtinv::rt::Runtime rt;
    auto s = qtinv::assemble(rt, entries.entries, entries.n, {128, 8});
    s = qtinv::truncate(rt, s, params.tau);
    state.ResumeTiming();
    const auto rep = run(rt, s, params);
    state.counters["cpl"] = static_cast<double>(rep.stats.critical_path_len);
    state.counters["tasks"] = static_cast<double>(rep.stats.tasks_executed);
  }
}

void BM_Rinch(benchmark::State& state) {
  factorize_chain(state, [](auto& rt, const auto& s, const auto& p) { return qtinv::rinch(rt, s, p); });
}
void BM_Lif(benchmark::State& state) {
  factorize_chain(state, [](auto& rt, const auto& s, const auto& p) { return qtinv::lif(rt, s, p, 512); });
}
void BM_Irsi(benchmark::State& state) {
  factorize_chain(state, [](auto& rt, const auto& s, const auto& p) { return qtinv::irsi(rt, s, p); });
}

BENCHMARK(BM_Rinch)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Lif)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Irsi)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
