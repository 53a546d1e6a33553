#include <benchmark/benchmark.h>

#include "mdlm/predictor.hpp"

using namespace mdlm;

namespace {

void BM_predict_forward(benchmark::State & state) {
    Dims dims = Dims::desk_default();
    PredictorParams params = init_params(1, dims);
    const int resp_len = static_cast<int>(state.range(0));

    TokenSequence prompt;
    for (int i = 0; i < 16; ++i) {
        prompt.ids.push_back(i % 200);
    }
    MaskedSequence resp;
    resp.t = 1.0;
    for (int i = 0; i < resp_len; ++i) {
        resp.ids.push_back(dims.vocab_size);  // fully masked
    }
    FeatureVec f(dims.feature_dim, 0.1);

    for (auto _ : state) {
        LogitsGrid g = predict(params, f, prompt, resp);
        benchmark::DoNotOptimize(g.probs.v.data());
    }
    state.SetItemsProcessed(state.iterations() * (resp_len + 17));
}

void BM_backward(benchmark::State & state) {
    Dims dims = Dims::desk_default();
    PredictorParams params = init_params(1, dims);
    const int resp_len = static_cast<int>(state.range(0));

    TokenSequence prompt{{1, 2, 3, 4, 5, 6, 7, 8}};
    MaskedSequence resp;
    resp.t = 0.5;
    for (int i = 0; i < resp_len; ++i) {
        resp.ids.push_back(i % 2 == 0 ? dims.vocab_size : (i % 200));
    }
    auto layout = ConversationLayout::single_turn(std::nullopt, prompt, resp.ids);

    Gradients grads = Gradients::shaped(dims);
    for (auto _ : state) {
        ForwardCacheHandle cache;
        LogitsGrid g = predict_recorded(params, layout, cache.get());
        Matrix dscores(g.scores.rows, g.scores.cols);
        dscores.fill(1e-3);
        backward(params, cache.get(), dscores, grads);
        benchmark::DoNotOptimize(grads.head.v.data());
    }
}

}  // namespace

BENCHMARK(BM_predict_forward)->Arg(16)->Arg(64)->Arg(96);
BENCHMARK(BM_backward)->Arg(16)->Arg(64);
