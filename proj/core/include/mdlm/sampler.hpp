#pragma once

#include <optional>
#include <vector>

#include "mdlm/config.hpp"
#include "mdlm/predictor.hpp"
#include "mdlm/rng.hpp"
#include "mdlm/trace.hpp"
#include "mdlm/types.hpp"

namespace mdlm {

// Per-block unmask counts: L/B blocks, Z*B/L steps per block, each block's
// counts summing to exactly B with every count >= 1.
struct UnmaskSchedule {
    int num_blocks      = 0;
    int steps_per_block = 0;
    std::vector<std::vector<int>> counts;  // [block][step]
};

// Base count B div n per step with the remainder handed one each to the
// earliest steps of the block.
UnmaskSchedule plan_schedule(const SamplerConfig & cfg);

// Returns the `keep_masked` positions with the lowest confidence; ties
// broken by ascending position index. `positions` and `confidences` are
// parallel arrays over the currently masked positions.
std::vector<int> remask_low_confidence(const std::vector<int> & positions,
                                       const std::vector<double> & confidences, int keep_masked);

// Uniformly random subset of size keep_masked; deterministic given rng.
std::vector<int> remask_random(const std::vector<int> & positions, int keep_masked, Pcg32 & rng);

struct GenerationResult {
    TokenSequence output;  // always exactly L tokens
    GenerationTrace trace;
};

// Semi-autoregressive block generation. The response starts fully masked;
// blocks are processed left to right; each step makes one predictor call,
// forms candidates at the active block's masked positions, commits all but
// the remasked ones, and never touches committed tokens or positions in
// blocks not yet active. Exactly Z predictor calls in total.
GenerationResult generate(const MaskPredictor & predictor,
                          const std::optional<FeatureVec> & features, const TokenSequence & prompt,
                          const SamplerConfig & cfg, const Vocab & vocab);

GenerationResult generate(const PredictorParams & params,
                          const std::optional<FeatureVec> & features, const TokenSequence & prompt,
                          const SamplerConfig & cfg, const Vocab & vocab);

// Display helper: cuts at the first end-of-text id, if any.
TokenSequence truncate_at_eot(const TokenSequence & seq, const Vocab & vocab);

}  // namespace mdlm
