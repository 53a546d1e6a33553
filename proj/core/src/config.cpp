#include "mdlm/config.hpp"

#include <stdexcept>

namespace mdlm {

std::string ValidationResult::message() const {
    std::string out;
    for (size_t i = 0; i < violations.size(); ++i) {
        if (i > 0) {
            out += "; ";
        }
        out += violations[i];
    }
    return out;
}

ValidationResult validate_sampler_config(const SamplerConfig & cfg) {
    ValidationResult r;
    auto & v = r.violations;

    if (cfg.gen_length <= 0) {
        v.push_back("gen_length must be positive");
    }
    if (cfg.block_length <= 0) {
        v.push_back("block_length must be positive");
    }
    if (cfg.steps <= 0) {
        v.push_back("steps must be positive");
    }
    if (cfg.gen_length > 0 && cfg.block_length > 0) {
        if (cfg.block_length > cfg.gen_length) {
            v.push_back("block_length exceeds gen_length (B > L)");
        }
        if (cfg.gen_length % cfg.block_length != 0) {
            v.push_back("gen_length not divisible by block_length (L mod B != 0)");
        }
    }
    if (cfg.gen_length > 0 && cfg.block_length > 0 && cfg.steps > 0) {
        if ((static_cast<int64_t>(cfg.steps) * cfg.block_length) % cfg.gen_length != 0) {
            v.push_back("steps*block_length not divisible by gen_length ((Z*B) mod L != 0)");
        }
        if (cfg.steps > cfg.gen_length) {
            v.push_back("steps exceed gen_length (Z > L)");
        }
    }
    if (cfg.predict_mode == PredictMode::sample && !(cfg.temperature > 0.0)) {
        v.push_back("temperature must be positive in sample mode");
    }
    return r;
}

void require_valid(const SamplerConfig & cfg) {
    ValidationResult r = validate_sampler_config(cfg);
    if (!r.ok()) {
        throw std::invalid_argument("invalid sampler config: " + r.message());
    }
}

const char * stage_name(Stage s) {
    switch (s) {
        case Stage::alignment: return "alignment";
        case Stage::md_sft:    return "md-sft";
        case Stage::sd_sft:    return "sd-sft";
    }
    return "?";
}

void StageConfig::validate() const {
    if (!(lr_projector > 0.0) || !(lr_backbone > 0.0)) {
        throw std::invalid_argument("learning rates must be positive");
    }
    if (epochs <= 0 || batch_size <= 0) {
        throw std::invalid_argument("epochs and batch_size must be positive");
    }
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
        throw std::invalid_argument("warmup_fraction must be in [0, 1)");
    }
    bool projector_only = train_projector && !train_backbone;
    bool both           = train_projector && train_backbone;
    if (stage == Stage::alignment && !projector_only) {
        throw std::invalid_argument("alignment stage trains exactly the projector");
    }
    if (stage != Stage::alignment && !both) {
        throw std::invalid_argument("SFT stages train projector and backbone");
    }
}

StageConfig StageConfig::reference_defaults(Stage s) {
    StageConfig c;
    c.stage = s;
    switch (s) {
        case Stage::alignment:
            c.train_projector = true;
            c.train_backbone  = false;
            c.lr_projector    = 1e-3;
            c.lr_backbone     = 1e-3;  // unused while frozen
            c.epochs          = 2;
            break;
        case Stage::md_sft:
            c.train_projector = true;
            c.train_backbone  = true;
            c.lr_projector    = 1e-5;
            c.lr_backbone     = 1e-5;
            c.epochs          = 4;
            break;
        case Stage::sd_sft:
            c.train_projector = true;
            c.train_backbone  = true;
            c.lr_projector    = 2e-6;
            c.lr_backbone     = 2e-6;
            c.epochs          = 2;
            break;
    }
    return c;
}

StageConfig StageConfig::desk_preset(Stage s) {
    StageConfig c = reference_defaults(s);
    c.lr_projector = 3e-3;
    c.lr_backbone  = 3e-3;
    switch (s) {
        case Stage::alignment: c.epochs = 2; break;
        case Stage::md_sft:    c.epochs = 8; break;
        case Stage::sd_sft:    c.epochs = 16; break;
    }
    return c;
}

}  // namespace mdlm
