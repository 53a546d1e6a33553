#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdlm/config.hpp"
#include "mdlm/predictor.hpp"
#include "mdlm/types.hpp"

namespace mdlm {

// Which weight groups receive updates. Frozen groups stay bitwise constant:
// the optimizer skips them entirely (no moment update, no weight decay).
struct FreezeMask {
    bool projector_trainable = true;
    bool backbone_trainable  = true;

    bool trainable(WeightGroup g) const {
        return g == WeightGroup::projector ? projector_trainable : backbone_trainable;
    }
};

// alignment -> projector only; md-sft / sd-sft -> projector + backbone.
// Visual features are inputs, never parameters, so nothing to freeze there.
FreezeMask build_freeze_mask(const StageConfig & stage);

// Cosine decay with a linear warmup over the leading fraction of steps.
// Returns the multiplier in [0, 1]: it reaches exactly 1 on the last warmup
// step and decays to 0 on the final step.
double schedule_factor(uint64_t step, uint64_t total_steps, double warmup_fraction);

inline double lr_at(uint64_t step, uint64_t total_steps, double peak, double warmup_fraction) {
    return peak * schedule_factor(step, total_steps, warmup_fraction);
}

struct AdamwScalars {
    double beta1        = 0.9;
    double beta2        = 0.999;
    double eps          = 1e-8;
    double weight_decay = 0.01;
};

struct AdamwUpdate {
    double p, m, v;
};

// One decoupled-weight-decay adaptive-moment update for a single weight,
// computed in double precision. `step_after` is the 1-based count of steps
// including this one (used for bias correction).
AdamwUpdate adamw_scalar_update(double p, double g, double m, double v, uint64_t step_after,
                                double lr, const AdamwScalars & hp);

// First and second moment estimates plus the completed-step counter.
// Moments are stored as 32-bit floats so checkpoints round-trip bitwise.
struct OptimizerState {
    PredictorParamsT<float> m;
    PredictorParamsT<float> v;
    uint64_t step = 0;

    static OptimizerState shaped(const Dims & dims);
};

// Applies one AdamW step with per-group learning rates scaled by the
// shared schedule factor. Throws naming the weight group if an update is
// non-finite.
void optimizer_step(PredictorParams & params, const Gradients & grads, OptimizerState & state,
                    const FreezeMask & freeze, const StageConfig & hp, double schedule_factor);

// Everything run-specific that is not a weight: optimizer state and the
// master seed all randomness derives from.
struct TrainerState {
    OptimizerState opt;
    uint64_t seed = 0;
};

// Batch layout for one epoch: instances are shuffled, stable-sorted by
// total length (so each batch holds similar lengths), chunked, and the
// batch visit order shuffled. A pure function of (corpus, seed, epoch).
std::vector<std::vector<int>> epoch_batches(const std::vector<DialogueInstance> & corpus,
                                            const Vocab & vocab, uint64_t seed, uint64_t epoch,
                                            int batch_size);

// Runs n_steps optimizer steps starting at state.opt.step; total_steps
// spans the whole schedule, so training can stop and resume bitwise.
// Returns the mean per-instance loss over the visited instances.
double train_steps(const std::vector<DialogueInstance> & corpus, PredictorParams & params,
                   TrainerState & state, const StageConfig & stage, const Vocab & vocab,
                   uint64_t n_steps, uint64_t total_steps);

// One full stage: fresh optimizer state, epochs * batches-per-epoch steps.
// Returns the mean training loss of each epoch.
std::vector<double> train_stage(const std::vector<DialogueInstance> & corpus,
                                PredictorParams & params, TrainerState & state,
                                const StageConfig & stage, const Vocab & vocab);

// Mean loss over a corpus without updating anything; the per-instance
// noise draws are a pure function of (seed, instance index).
double evaluate_loss(const std::vector<DialogueInstance> & corpus, const PredictorParams & params,
                     const Vocab & vocab, uint64_t seed);

// Builds the conversation layout used for training and scoring: prompts
// stay clean, every response gets a terminal end-of-text id appended and
// is masked jointly with the instance's shared noise level.
ConversationLayout training_layout(const DialogueInstance & instance, const Vocab & vocab);

// The clean concatenated response targets (with terminal eot per turn).
TokenSequence training_targets(const DialogueInstance & instance, const Vocab & vocab);

}  // namespace mdlm
