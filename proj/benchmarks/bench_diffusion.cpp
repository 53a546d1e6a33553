#include <benchmark/benchmark.h>

#include "mdlm/diffusion.hpp"

using namespace mdlm;

namespace {

void BM_forward_mask(benchmark::State & state) {
    Vocab v = Vocab::byte_default();
    TokenSequence x0;
    for (int i = 0; i < state.range(0); ++i) {
        x0.ids.push_back(i % 256);
    }
    Pcg32 rng(1, 1);
    for (auto _ : state) {
        auto xt = forward_mask(x0, 0.5, v, rng);
        benchmark::DoNotOptimize(xt.ids.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_forward_mask)->Arg(64)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
