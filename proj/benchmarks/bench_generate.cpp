#include <benchmark/benchmark.h>

#include "mdlm/sampler.hpp"

using namespace mdlm;

namespace {

void BM_generate(benchmark::State & state) {
    const Vocab vocab = Vocab::byte_default();
    Dims dims = Dims::desk_default();
    PredictorParams params = init_params(7, dims);

    SamplerConfig cfg;
    cfg.gen_length   = 64;
    cfg.block_length = 64;
    cfg.steps        = static_cast<int>(state.range(0));
    cfg.seed         = 5;

    TokenSequence prompt = TokenSequence{{119, 104, 97, 116, 63}};  // "what?"
    for (auto _ : state) {
        auto res = generate(params, std::nullopt, prompt, cfg, vocab);
        benchmark::DoNotOptimize(res.output.ids.data());
    }
    state.SetItemsProcessed(state.iterations() * cfg.steps);
}

}  // namespace

// one full query per iteration; steps Z is the predictor-call count
BENCHMARK(BM_generate)->Arg(8)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
