#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mdlm {

// One generation step: which block was active, the (t, s) pair of the
// block-local time grid, and the positions committed this step together
// with their confidences.
struct TraceStep {
    int step  = 0;  // global step index, 0-based
    int block = 0;
    double t = 0.0;
    double s = 0.0;
    int64_t latency_us = 0;  // predictor call latency
    std::vector<int> positions;
    std::vector<double> confidences;  // parallel to positions
};

struct GenerationTrace {
    int gen_length   = 0;
    int block_length = 0;
    int steps        = 0;

    double total_seconds = 0.0;
    int emitted_tokens   = 0;  // tokens before the first end-of-text id

    std::vector<TraceStep> entries;

    int predictor_calls() const { return static_cast<int>(entries.size()); }
    int total_unmasked() const;
};

// Line-oriented text format, one step per line, `#`-prefixed header lines.
std::string serialize_trace(const GenerationTrace & trace);
void write_trace(std::ostream & os, const GenerationTrace & trace);
GenerationTrace parse_trace(std::istream & is);
GenerationTrace parse_trace_string(const std::string & text);

}  // namespace mdlm
