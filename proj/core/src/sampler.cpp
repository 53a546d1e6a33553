#include "mdlm/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mdlm {

UnmaskSchedule plan_schedule(const SamplerConfig & cfg) {
    require_valid(cfg);
    UnmaskSchedule sched;
    sched.num_blocks      = cfg.num_blocks();
    sched.steps_per_block = cfg.steps_per_block();
    const int n    = sched.steps_per_block;
    const int base = cfg.block_length / n;
    const int rem  = cfg.block_length % n;
    std::vector<int> counts(n, base);
    for (int j = 0; j < rem; ++j) {
        counts[j] += 1;
    }
    sched.counts.assign(sched.num_blocks, counts);
    return sched;
}

std::vector<int> remask_low_confidence(const std::vector<int> & positions,
                                       const std::vector<double> & confidences, int keep_masked) {
    if (keep_masked < 0) {
        throw std::invalid_argument("keep_masked must be non-negative");
    }
    if (positions.size() != confidences.size()) {
        throw std::invalid_argument("positions/confidences size mismatch");
    }
    if (static_cast<size_t>(keep_masked) > positions.size()) {
        throw std::invalid_argument("keep_masked exceeds masked position count");
    }
    std::vector<size_t> order(positions.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (confidences[a] != confidences[b]) {
            return confidences[a] < confidences[b];
        }
        return positions[a] < positions[b];
    });
    std::vector<int> out;
    out.reserve(keep_masked);
    for (int i = 0; i < keep_masked; ++i) {
        out.push_back(positions[order[i]]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> remask_random(const std::vector<int> & positions, int keep_masked, Pcg32 & rng) {
    if (keep_masked < 0) {
        throw std::invalid_argument("keep_masked must be non-negative");
    }
    if (static_cast<size_t>(keep_masked) > positions.size()) {
        throw std::invalid_argument("keep_masked exceeds masked position count");
    }
    std::vector<int> pool = positions;
    // partial Fisher-Yates: the first keep_masked entries of a uniformly
    // random permutation form a uniformly random subset
    for (int i = 0; i < keep_masked; ++i) {
        uint32_t j = static_cast<uint32_t>(i) +
                     rng.next_below(static_cast<uint32_t>(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(keep_masked);
    std::sort(pool.begin(), pool.end());
    return pool;
}

TokenSequence truncate_at_eot(const TokenSequence & seq, const Vocab & vocab) {
    TokenSequence out;
    for (TokenId id : seq.ids) {
        if (id == vocab.eot_id) {
            break;
        }
        out.ids.push_back(id);
    }
    return out;
}

GenerationResult generate(const MaskPredictor & predictor,
                          const std::optional<FeatureVec> & features, const TokenSequence & prompt,
                          const SamplerConfig & cfg, const Vocab & vocab) {
    require_valid(cfg);
    const UnmaskSchedule sched = plan_schedule(cfg);
    const TokenId mask = vocab.mask_id();
    const int L = cfg.gen_length;
    const int B = cfg.block_length;
    const int n = sched.steps_per_block;

    Pcg32 rng(cfg.seed, stream::kSample);

    GenerationResult result;
    result.trace.gen_length   = L;
    result.trace.block_length = B;
    result.trace.steps        = cfg.steps;

    std::vector<TokenId> response(L, mask);

    const auto wall0 = std::chrono::steady_clock::now();
    int global_step = 0;
    for (int b = 0; b < sched.num_blocks; ++b) {
        const int lo = b * B;
        const int hi = lo + B;
        for (int j = 0; j < n; ++j, ++global_step) {
            const double t = static_cast<double>(n - j) / n;
            const double s = static_cast<double>(n - j - 1) / n;

            MaskedSequence current{response, t};
            const auto p0 = std::chrono::steady_clock::now();
            LogitsGrid grid = predictor.predict_response(features, prompt, current);
            const auto p1 = std::chrono::steady_clock::now();

            if (grid.scores.rows != L) {
                throw std::runtime_error("predictor returned a grid of wrong length");
            }
            for (double v : grid.scores.v) {
                if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
                    throw std::runtime_error("non-finite logits during generation");
                }
            }

            // candidates at the active block's masked positions
            std::vector<int> masked;
            for (int p = lo; p < hi; ++p) {
                if (response[p] == mask) {
                    masked.push_back(p);
                }
            }

            std::vector<TokenId> cand(masked.size());
            std::vector<double> conf(masked.size());
            std::optional<Matrix> sampled_probs;
            if (cfg.predict_mode == PredictMode::sample) {
                sampled_probs = softmax_rows(grid.scores, cfg.temperature);
            }
            for (size_t m = 0; m < masked.size(); ++m) {
                const int p = masked[m];
                TokenId tok = 0;
                if (cfg.predict_mode == PredictMode::greedy) {
                    const double * row = grid.scores.row(p);
                    for (int v = 1; v < grid.scores.cols; ++v) {
                        if (row[v] > row[tok]) {
                            tok = v;
                        }
                    }
                } else {
                    const double * row = sampled_probs->row(p);
                    double u = rng.next_double();
                    double acc = 0.0;
                    tok = grid.scores.cols - 1;
                    for (int v = 0; v < grid.scores.cols; ++v) {
                        acc += row[v];
                        if (u < acc) {
                            tok = v;
                            break;
                        }
                    }
                }
                cand[m] = tok;
                conf[m] = grid.probs(p, tok);
            }

            const int commit = sched.counts[b][j];
            const int keep   = static_cast<int>(masked.size()) - commit;
            if (keep < 0) {
                throw std::runtime_error("schedule commits more tokens than remain masked");
            }
            std::vector<int> remask;
            if (cfg.remask_mode == RemaskMode::low_confidence) {
                remask = remask_low_confidence(masked, conf, keep);
            } else {
                remask = remask_random(masked, keep, rng);
            }

            TraceStep entry;
            entry.step  = global_step;
            entry.block = b;
            entry.t = t;
            entry.s = s;
            entry.latency_us =
                std::chrono::duration_cast<std::chrono::microseconds>(p1 - p0).count();
            size_t ri = 0;
            for (size_t m = 0; m < masked.size(); ++m) {
                const int p = masked[m];
                while (ri < remask.size() && remask[ri] < p) {
                    ++ri;
                }
                if (ri < remask.size() && remask[ri] == p) {
                    continue;  // stays masked
                }
                response[p] = cand[m];
                entry.positions.push_back(p);
                entry.confidences.push_back(conf[m]);
            }
            result.trace.entries.push_back(std::move(entry));
        }
        for (int p = lo; p < hi; ++p) {
            if (response[p] == mask) {
                throw std::runtime_error("block finished with masked positions left");
            }
        }
    }
    const auto wall1 = std::chrono::steady_clock::now();
    result.trace.total_seconds = std::chrono::duration<double>(wall1 - wall0).count();

    result.output.ids = std::move(response);
    int emitted = L;
    for (int p = 0; p < L; ++p) {
        if (result.output.ids[p] == vocab.eot_id) {
            emitted = p;
            break;
        }
    }
    result.trace.emitted_tokens = emitted;
    return result;
}

GenerationResult generate(const PredictorParams & params,
                          const std::optional<FeatureVec> & features, const TokenSequence & prompt,
                          const SamplerConfig & cfg, const Vocab & vocab) {
    if (params.dims.vocab_size != vocab.size) {
        throw std::invalid_argument("vocab size does not match predictor output width");
    }
    TransformerPredictor predictor(params);
    return generate(predictor, features, prompt, cfg, vocab);
}

}  // namespace mdlm
