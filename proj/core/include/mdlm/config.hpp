#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mdlm {

enum class RemaskMode {
    low_confidence,
    random,
};

enum class PredictMode {
    greedy,
    sample,
};

// Inference hyperparameters: generation length L, block length B, total
// sampling steps Z, plus the remask/predict strategies and the seed.
struct SamplerConfig {
    int gen_length   = 64;   // L
    int block_length = 64;   // B
    int steps        = 64;   // Z

    RemaskMode remask_mode  = RemaskMode::low_confidence;
    PredictMode predict_mode = PredictMode::greedy;
    double temperature      = 1.0;  // used only in sample mode

    uint64_t seed = 0;

    int num_blocks() const { return gen_length / block_length; }
    int steps_per_block() const {
        return static_cast<int>(static_cast<int64_t>(steps) * block_length / gen_length);
    }
};

struct ValidationResult {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
    std::string message() const;
};

// Accepts iff every invariant holds: positive L/B/Z, B <= L, L mod B == 0,
// (Z*B) mod L == 0, Z <= L, and temperature > 0 in sample mode. Every
// violated invariant is reported by name.
ValidationResult validate_sampler_config(const SamplerConfig & cfg);

// Throwing variant for call sites that treat invalid configs as fatal.
void require_valid(const SamplerConfig & cfg);

enum class Stage {
    alignment,
    md_sft,   // multi-turn dialogue SFT
    sd_sft,   // single-turn dataset-specific SFT
};

const char * stage_name(Stage s);

// Per-stage training configuration. The alignment stage trains only the
// projector; both SFT stages train projector and backbone. Visual features
// are inputs, never parameters, so they are structurally frozen.
struct StageConfig {
    Stage stage = Stage::md_sft;

    bool train_projector = true;
    bool train_backbone  = true;

    double lr_projector = 1e-3;
    double lr_backbone  = 1e-3;

    int epochs     = 1;
    int batch_size = 16;

    double warmup_fraction = 0.03;

    double weight_decay = 0.01;
    double beta1        = 0.9;
    double beta2        = 0.999;
    double adam_eps     = 1e-8;

    void validate() const;

    // Reference learning rates: 1e-3 projector-only alignment, 1e-5 for
    // multi-turn SFT, 2e-6 for dataset-specific SFT.
    static StageConfig reference_defaults(Stage s);

    // Practical small-model preset: 1e-3 throughout. The reference SFT
    // rates undertrain a model this size.
    static StageConfig desk_preset(Stage s);
};

}  // namespace mdlm
