#include "mdlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mdlm/diffusion.hpp"

namespace mdlm {

FreezeMask build_freeze_mask(const StageConfig & stage) {
    stage.validate();
    FreezeMask mask;
    mask.projector_trainable = stage.train_projector;
    mask.backbone_trainable  = stage.train_backbone;
    return mask;
}

double schedule_factor(uint64_t step, uint64_t total_steps, double warmup_fraction) {
    if (total_steps == 0) {
        throw std::invalid_argument("schedule needs total_steps > 0");
    }
    if (step >= total_steps) {
        return 0.0;
    }
    const uint64_t warmup =
        static_cast<uint64_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
    if (warmup > 0 && step < warmup) {
        return static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    if (total_steps == warmup) {
        return 1.0;
    }
    const double progress =
        static_cast<double>(step + 1 - warmup) / static_cast<double>(total_steps - warmup);
    return 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamwUpdate adamw_scalar_update(double p, double g, double m, double v, uint64_t step_after,
                                double lr, const AdamwScalars & hp) {
    const double m1 = hp.beta1 * m + (1.0 - hp.beta1) * g;
    const double v1 = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
    const double mhat = m1 / (1.0 - std::pow(hp.beta1, static_cast<double>(step_after)));
    const double vhat = v1 / (1.0 - std::pow(hp.beta2, static_cast<double>(step_after)));
    const double p1 = p - lr * (mhat / (std::sqrt(vhat) + hp.eps)) - lr * hp.weight_decay * p;
    return {p1, m1, v1};
}

OptimizerState OptimizerState::shaped(const Dims & dims) {
    OptimizerState s;
    // Mat value-initializes, so both moments start at zero
    s.m = PredictorParamsT<float>::shaped(dims);
    s.v = PredictorParamsT<float>::shaped(dims);
    s.step = 0;
    return s;
}

void optimizer_step(PredictorParams & params, const Gradients & grads, OptimizerState & state,
                    const FreezeMask & freeze, const StageConfig & hp, double schedule_factor) {
    auto pe = tensor_entries(params);
    auto ge = tensor_entries(const_cast<Gradients &>(grads));
    auto me = tensor_entries(state.m);
    auto ve = tensor_entries(state.v);
    if (pe.size() != ge.size() || pe.size() != me.size() || pe.size() != ve.size()) {
        throw std::invalid_argument("optimizer_step: mismatched tensor structure");
    }

    AdamwScalars scalars;
    scalars.beta1        = hp.beta1;
    scalars.beta2        = hp.beta2;
    scalars.eps          = hp.adam_eps;
    scalars.weight_decay = hp.weight_decay;

    const uint64_t step_after = state.step + 1;

    for (size_t i = 0; i < pe.size(); ++i) {
        if (!freeze.trainable(pe[i].group)) {
            continue;
        }
        if (pe[i].mat->count() != ge[i].mat->count()) {
            throw std::invalid_argument("optimizer_step: gradient shape mismatch at " + pe[i].name);
        }
        const double lr =
            (pe[i].group == WeightGroup::projector ? hp.lr_projector : hp.lr_backbone) *
            schedule_factor;
        float * pw = pe[i].mat->v.data();
        const double * gw = ge[i].mat->v.data();
        float * mw = me[i].mat->v.data();
        float * vw = ve[i].mat->v.data();
        const size_t n = pe[i].mat->count();
        for (size_t j = 0; j < n; ++j) {
            AdamwUpdate u = adamw_scalar_update(static_cast<double>(pw[j]), gw[j],
                                                static_cast<double>(mw[j]),
                                                static_cast<double>(vw[j]), step_after, lr,
                                                scalars);
            if (!std::isfinite(u.p)) {
                throw std::runtime_error(std::string("non-finite update in weight group ") +
                                         weight_group_name(pe[i].group) + " (" + pe[i].name + ")");
            }
            pw[j] = static_cast<float>(u.p);
            mw[j] = static_cast<float>(u.m);
            vw[j] = static_cast<float>(u.v);
        }
    }
    state.step = step_after;
}

ConversationLayout training_layout(const DialogueInstance & instance, const Vocab & vocab) {
    instance.validate();
    ConversationLayout layout;
    layout.features = instance.visual_features;
    for (const auto & turn : instance.turns) {
        if (!turn.prompt.empty()) {
            layout.segments.push_back({false, turn.prompt.ids});
        }
        std::vector<TokenId> r = turn.response.ids;
        r.push_back(vocab.eot_id);
        layout.segments.push_back({true, std::move(r)});
    }
    return layout;
}

TokenSequence training_targets(const DialogueInstance & instance, const Vocab & vocab) {
    TokenSequence r0;
    for (const auto & turn : instance.turns) {
        r0.ids.insert(r0.ids.end(), turn.response.ids.begin(), turn.response.ids.end());
        r0.ids.push_back(vocab.eot_id);
    }
    return r0;
}

std::vector<std::vector<int>> epoch_batches(const std::vector<DialogueInstance> & corpus,
                                            const Vocab & vocab, uint64_t seed, uint64_t epoch,
                                            int batch_size) {
    const int n = static_cast<int>(corpus.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    Pcg32 rng(seed, stream::sub(stream::kShuffle, epoch));
    for (int i = n - 1; i > 0; --i) {
        uint32_t j = rng.next_below(static_cast<uint32_t>(i + 1));
        std::swap(order[i], order[j]);
    }

    std::vector<int> lengths(n);
    for (int i = 0; i < n; ++i) {
        lengths[i] = training_layout(corpus[i], vocab).total_len();
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return lengths[a] < lengths[b]; });

    std::vector<std::vector<int>> batches;
    for (int i = 0; i < n; i += batch_size) {
        batches.emplace_back(order.begin() + i,
                             order.begin() + std::min(n, i + batch_size));
    }

    for (int i = static_cast<int>(batches.size()) - 1; i > 0; --i) {
        uint32_t j = rng.next_below(static_cast<uint32_t>(i + 1));
        std::swap(batches[i], batches[j]);
    }
    return batches;
}

namespace {

struct InstancePass {
    double loss = 0.0;
};

// forward + loss (+ optional backward) for one instance at noise draw
// streams keyed by (noise_key_a, noise_key_b)
InstancePass run_instance(const DialogueInstance & instance, const PredictorParams & params,
                          const Vocab & vocab, uint64_t seed, uint64_t key_a, uint64_t key_b,
                          Gradients * grads, double grad_scale) {
    ConversationLayout layout = training_layout(instance, vocab);
    TokenSequence r0 = training_targets(instance, vocab);

    Pcg32 noise_rng(seed, stream::sub(stream::kNoise, key_a, key_b));
    NoiseSample t = sample_training_noise(noise_rng);
    Pcg32 mask_rng(seed, stream::sub(stream::kMask, key_a, key_b));
    MaskedSequence rt = forward_mask(r0, t, vocab, mask_rng);

    // splice the masked response back into the layout's response segments
    {
        size_t cursor = 0;
        for (auto & seg : layout.segments) {
            if (!seg.is_response) {
                continue;
            }
            for (auto & id : seg.ids) {
                id = rt.ids[cursor++];
            }
        }
    }

    InstancePass out;
    if (grads == nullptr) {
        LogitsGrid grid = predict(params, layout);
        out.loss = loss_conditional(r0, rt, grid.probs, vocab);
        return out;
    }

    ForwardCacheHandle cache;
    LogitsGrid grid = predict_recorded(params, layout, cache.get());
    out.loss = loss_conditional(r0, rt, grid.probs, vocab);

    // d(loss)/d(score): (probs - onehot(target)) / t at masked response rows
    Matrix dscores(grid.scores.rows, grid.scores.cols);
    const double w = grad_scale / rt.t;
    for (int i = 0; i < grid.scores.rows; ++i) {
        if (rt.ids[i] != vocab.mask_id()) {
            continue;
        }
        const double * p = grid.probs.row(i);
        double * d = dscores.row(i);
        for (int v = 0; v < grid.scores.cols; ++v) {
            d[v] = w * p[v];
        }
        d[r0.ids[i]] -= w;
    }
    backward(params, cache.get(), dscores, *grads);
    return out;
}

}  // namespace

double train_steps(const std::vector<DialogueInstance> & corpus, PredictorParams & params,
                   TrainerState & state, const StageConfig & stage, const Vocab & vocab,
                   uint64_t n_steps, uint64_t total_steps) {
    stage.validate();
    if (corpus.empty()) {
        throw std::invalid_argument("training corpus is empty");
    }
    const FreezeMask freeze = build_freeze_mask(stage);
    const uint64_t batches_per_epoch =
        (corpus.size() + stage.batch_size - 1) / static_cast<uint64_t>(stage.batch_size);

    Gradients grads = Gradients::shaped(params.dims);

    double loss_sum = 0.0;
    uint64_t visited = 0;

    uint64_t epoch = state.opt.step / batches_per_epoch;
    std::vector<std::vector<int>> batches = epoch_batches(corpus, vocab, state.seed, epoch,
                                                          stage.batch_size);

    for (uint64_t k = 0; k < n_steps; ++k) {
        const uint64_t step = state.opt.step;
        const uint64_t step_epoch = step / batches_per_epoch;
        if (step_epoch != epoch) {
            epoch   = step_epoch;
            batches = epoch_batches(corpus, vocab, state.seed, epoch, stage.batch_size);
        }
        const auto & batch = batches[step % batches_per_epoch];

        for (auto & e : tensor_entries(grads)) {
            e.mat->fill(0.0);
        }
        const double grad_scale = 1.0 / static_cast<double>(batch.size());
        for (size_t slot = 0; slot < batch.size(); ++slot) {
            InstancePass pass = run_instance(corpus[batch[slot]], params, vocab, state.seed, step,
                                             slot, &grads, grad_scale);
            loss_sum += pass.loss;
            visited++;
        }
        check_finite(grads);
        optimizer_step(params, grads, state.opt, freeze, stage,
                       schedule_factor(step, total_steps, stage.warmup_fraction));
    }
    return visited > 0 ? loss_sum / static_cast<double>(visited) : 0.0;
}

std::vector<double> train_stage(const std::vector<DialogueInstance> & corpus,
                                PredictorParams & params, TrainerState & state,
                                const StageConfig & stage, const Vocab & vocab) {
    stage.validate();
    if (corpus.empty()) {
        throw std::invalid_argument("training corpus is empty");
    }
    state.opt = OptimizerState::shaped(params.dims);
    const uint64_t batches_per_epoch =
        (corpus.size() + stage.batch_size - 1) / static_cast<uint64_t>(stage.batch_size);
    const uint64_t total_steps = batches_per_epoch * static_cast<uint64_t>(stage.epochs);

    std::vector<double> epoch_losses;
    epoch_losses.reserve(stage.epochs);
    for (int e = 0; e < stage.epochs; ++e) {
        epoch_losses.push_back(
            train_steps(corpus, params, state, stage, vocab, batches_per_epoch, total_steps));
    }
    return epoch_losses;
}

double evaluate_loss(const std::vector<DialogueInstance> & corpus, const PredictorParams & params,
                     const Vocab & vocab, uint64_t seed) {
    if (corpus.empty()) {
        throw std::invalid_argument("evaluation corpus is empty");
    }
    double sum = 0.0;
    for (size_t i = 0; i < corpus.size(); ++i) {
        InstancePass pass = run_instance(corpus[i], params, vocab, seed, 0xe7a1, i, nullptr, 0.0);
        sum += pass.loss;
    }
    return sum / static_cast<double>(corpus.size());
}

}  // namespace mdlm
