#pragma once

#include <vector>

#include "mdlm/rng.hpp"
#include "mdlm/types.hpp"

namespace mdlm {

// Noise levels below this floor are never sampled: the 1/t loss weight and
// the log must stay finite.
inline constexpr double kNoiseFloor = 1e-3;

// Probability clamp applied inside the log of both losses.
inline constexpr double kProbFloor = 1e-12;

struct NoiseSample {
    double t = 1.0;  // in (kNoiseFloor, 1]
};

// t uniform on (kNoiseFloor, 1].
NoiseSample sample_training_noise(Pcg32 & rng);

// Absorbing forward process: each position independently keeps its token
// with probability 1-t and becomes the mask symbol with probability t.
// Accepts the analytic boundaries t=0 (identity) and t=1 (all masked).
MaskedSequence forward_mask(const TokenSequence & x0, double t, const Vocab & vocab, Pcg32 & rng);

inline MaskedSequence forward_mask(const TokenSequence & x0, NoiseSample t, const Vocab & vocab,
                                   Pcg32 & rng) {
    return forward_mask(x0, t.t, vocab, rng);
}

// One weighted outcome of the exact reverse transition.
struct SequenceMass {
    MaskedSequence seq;
    double prob = 0.0;
};

// Exact one-step reverse transition for 0 <= s < t <= 1:
//   - unmasked positions are kept with probability 1,
//   - each masked position stays masked with probability s/t, otherwise
//     resolves to token v with probability (1 - s/t) * conditional[i][v].
// Returns the full product distribution by enumeration; intended for tiny
// state spaces only. `conditional` supplies one distribution over the real
// vocabulary per masked position (indexed by absolute position).
std::vector<SequenceMass> reverse_transition_exact(const MaskedSequence & xt, double t, double s,
                                                   const std::vector<std::vector<double>> & conditional,
                                                   const Vocab & vocab);

// Unconditional masked-prediction loss:
//   (1/t) * sum_i 1[xt_i = mask] * (-log probs(i, x0_i))
// `probs` holds one row per position of x0 with per-token probabilities.
double loss_unconditional(const TokenSequence & x0, const MaskedSequence & xt, const Matrix & probs,
                          const Vocab & vocab);

// Conditioned variant: the sum runs over response positions only. `r0` is
// the clean concatenated response for the instance and `rt` its masked
// version; prompt and visual features never contribute. `probs` has either
// one row per response position, or one row per position of the full
// conversation layout, in which case `response_row_offset` locates the
// first response row (rows for multi-turn responses must be contiguous in
// response order).
double loss_conditional(const TokenSequence & r0, const MaskedSequence & rt, const Matrix & probs,
                        const Vocab & vocab, int response_row_offset = 0);

// Convenience overload deriving the clean response from the instance
// (concatenation of all turn responses, in order).
double loss_conditional(const DialogueInstance & instance, const MaskedSequence & rt,
                        const Matrix & probs, const Vocab & vocab, int response_row_offset = 0);

}  // namespace mdlm
