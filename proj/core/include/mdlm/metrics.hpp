#pragma once

#include <string>
#include <vector>

#include "mdlm/config.hpp"
#include "mdlm/trace.hpp"
#include "mdlm/types.hpp"

namespace mdlm {

// Fraction of adjacent equal pairs: positions i >= 1 with seq[i] == seq[i-1].
// Length-1 sequences score 0; empty input is an error.
double repetition_rate(const TokenSequence & seq);

// |unique(truth) ∩ unique(generated)| / |unique(truth)|. Empty truth is an
// error.
double token_recall(const TokenSequence & truth, const TokenSequence & generated);

// Lowercases ASCII, strips leading/trailing whitespace and trailing ASCII
// punctuation ("Yes." -> "yes").
std::string normalize_answer(const std::string & text);

// 1 iff the generated answer, truncated at end-of-text and normalized,
// equals the (already canonical) truth label.
int closed_accuracy(const std::string & truth, const TokenSequence & generated,
                    const Vocab & vocab);

struct TimingStats {
    double t_per_query = 0.0;  // mean seconds per query
    double w_per_query = 0.0;  // mean emitted tokens per query
    double t_per_word  = 0.0;  // t_per_query / w_per_query
};

// Arithmetic means over the traces; emitted tokens count positions before
// the first end-of-text id (full length if absent).
TimingStats timing_stats(const std::vector<GenerationTrace> & traces);

struct MetricsRecord {
    SamplerConfig config;
    int queries = 0;

    double predictor_calls_per_query = 0.0;
    TimingStats timing;

    double repetition = 0.0;  // mean over raw fixed-length outputs
    double closed_acc = 0.0;  // mean exact-match accuracy
    double recall     = 0.0;  // mean token recall
};

}  // namespace mdlm
