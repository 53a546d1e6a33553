#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mdlm/metrics.hpp"
#include "mdlm/predictor.hpp"
#include "mdlm/sampler.hpp"

namespace mdlm {

struct SweepOptions {
    uint64_t seed = 0;   // combined with each config's own seed per query
    int threads   = 1;   // configs may run in parallel, one rng each
};

struct QueryOutput {
    TokenSequence output;
    GenerationTrace trace;
};

// Generation outputs for one config over a corpus: one query per instance,
// prompting with the first turn's prompt.
std::vector<QueryOutput> run_config(const std::vector<DialogueInstance> & corpus,
                                    const PredictorParams & params, const SamplerConfig & cfg,
                                    const Vocab & vocab, uint64_t sweep_seed);

// Pure scoring: a function of (outputs, corpus) only, so re-scoring stored
// outputs reproduces the record bitwise (timings aside, which come from the
// traces unmodified).
MetricsRecord score_outputs(const SamplerConfig & cfg, const std::vector<QueryOutput> & outputs,
                            const std::vector<DialogueInstance> & corpus, const Vocab & vocab);

// Validates the whole grid up front (any invalid config rejects the grid),
// then runs every config and scores it. Config order is preserved in the
// result regardless of thread count.
std::vector<MetricsRecord> run_sweep(const std::vector<DialogueInstance> & corpus,
                                     const PredictorParams & params,
                                     const std::vector<SamplerConfig> & grid, const Vocab & vocab,
                                     const SweepOptions & opts);

// One row per config in a fixed column order:
//   L,B,Z,remask,predict,temperature,seed,queries,predictor_calls_per_query,
//   t_per_query,w_per_query,t_per_word,repetition_rate,closed_accuracy,
//   token_recall
// `header` key/value pairs are echoed as leading `# key=value` lines.
void write_sweep_csv(std::ostream & os, const std::vector<MetricsRecord> & records,
                     const std::vector<std::pair<std::string, std::string>> & header);

void write_sweep_csv_file(const std::string & path, const std::vector<MetricsRecord> & records,
                          const std::vector<std::pair<std::string, std::string>> & header);

}  // namespace mdlm
