#pragma once

#include <string>

#include "mdlm/predictor.hpp"
#include "mdlm/trainer.hpp"

namespace mdlm {

struct Checkpoint {
    PredictorParams params;
    OptimizerState opt;
    uint64_t seed = 0;
};

// Versioned binary format, little-endian throughout:
//   "MDLM"   magic, 4 bytes
//   u32      format version (currently 1)
//   u32 x 8  dims: vocab_size, feature_dim, d_model, d_ff, n_layers,
//            n_heads, max_len, proj_hidden
//   u64      rng seed
//   u64      completed optimizer steps
//   f32[]    weights in tensor_entries order, then first moments, then
//            second moments (same order)
// Writes are atomic: a temp file in the same directory is renamed over the
// destination.
void save_checkpoint(const std::string & path, const PredictorParams & params,
                     const OptimizerState & opt, uint64_t seed);

Checkpoint load_checkpoint(const std::string & path);

}  // namespace mdlm
