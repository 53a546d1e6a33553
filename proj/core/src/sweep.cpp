#include "mdlm/sweep.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "mdlm/tokenizer.hpp"

namespace mdlm {

std::vector<QueryOutput> run_config(const std::vector<DialogueInstance> & corpus,
                                    const PredictorParams & params, const SamplerConfig & cfg,
                                    const Vocab & vocab, uint64_t sweep_seed) {
    std::vector<QueryOutput> outs;
    outs.reserve(corpus.size());
    for (size_t q = 0; q < corpus.size(); ++q) {
        const auto & inst = corpus[q];
        inst.validate();
        SamplerConfig per_query = cfg;
        per_query.seed = mix64(sweep_seed ^ mix64(cfg.seed) ^ mix64(mix64(q)));
        GenerationResult res =
            generate(params, inst.visual_features, inst.turns[0].prompt, per_query, vocab);
        outs.push_back({std::move(res.output), std::move(res.trace)});
    }
    return outs;
}

MetricsRecord score_outputs(const SamplerConfig & cfg, const std::vector<QueryOutput> & outputs,
                            const std::vector<DialogueInstance> & corpus, const Vocab & vocab) {
    if (outputs.size() != corpus.size()) {
        throw std::invalid_argument("score_outputs: outputs/corpus size mismatch");
    }
    if (outputs.empty()) {
        throw std::invalid_argument("score_outputs: empty corpus");
    }
    MetricsRecord rec;
    rec.config  = cfg;
    rec.queries = static_cast<int>(outputs.size());

    std::vector<GenerationTrace> traces;
    traces.reserve(outputs.size());
    double rep = 0.0, acc = 0.0, recall = 0.0, calls = 0.0;
    for (size_t q = 0; q < outputs.size(); ++q) {
        const auto & out = outputs[q];
        traces.push_back(out.trace);
        calls += out.trace.predictor_calls();
        rep += repetition_rate(out.output);

        // the reference answer ends at its own end-of-text marker, if any
        const TokenSequence truth_tokens = truncate_at_eot(corpus[q].turns[0].response, vocab);
        const std::string truth = normalize_answer(detokenize(truth_tokens, vocab));
        acc += closed_accuracy(truth, out.output, vocab);
        recall += token_recall(truth_tokens, truncate_at_eot(out.output, vocab));
    }
    const double n = static_cast<double>(outputs.size());
    rec.predictor_calls_per_query = calls / n;
    rec.timing     = timing_stats(traces);
    rec.repetition = rep / n;
    rec.closed_acc = acc / n;
    rec.recall     = recall / n;
    return rec;
}

std::vector<MetricsRecord> run_sweep(const std::vector<DialogueInstance> & corpus,
                                     const PredictorParams & params,
                                     const std::vector<SamplerConfig> & grid, const Vocab & vocab,
                                     const SweepOptions & opts) {
    if (grid.empty()) {
        throw std::invalid_argument("run_sweep: empty config grid");
    }
    if (corpus.empty()) {
        throw std::invalid_argument("run_sweep: empty corpus");
    }
    for (size_t i = 0; i < grid.size(); ++i) {
        ValidationResult r = validate_sampler_config(grid[i]);
        if (!r.ok()) {
            throw std::invalid_argument("run_sweep: config " + std::to_string(i) +
                                        " invalid: " + r.message());
        }
    }

    std::vector<MetricsRecord> records(grid.size());
    const int threads = std::max(1, opts.threads);

    std::exception_ptr first_error;
    std::mutex error_mu;
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= grid.size()) {
                return;
            }
            try {
                auto outs = run_config(corpus, params, grid[i], vocab, opts.seed);
                records[i] = score_outputs(grid[i], outs, corpus, vocab);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) {
                    first_error = std::current_exception();
                }
                return;
            }
        }
    };

    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
        for (auto & th : pool) {
            th.join();
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    return records;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char * remask_name(RemaskMode m) {
    return m == RemaskMode::low_confidence ? "low-confidence" : "random";
}

const char * predict_name(PredictMode m) {
    return m == PredictMode::greedy ? "greedy" : "sample";
}

}  // namespace

void write_sweep_csv(std::ostream & os, const std::vector<MetricsRecord> & records,
                     const std::vector<std::pair<std::string, std::string>> & header) {
    os << "# mdlm-sweep v1\n";
    for (const auto & [k, v] : header) {
        os << "# " << k << "=" << v << "\n";
    }
    os << "L,B,Z,remask,predict,temperature,seed,queries,predictor_calls_per_query,"
          "t_per_query,w_per_query,t_per_word,repetition_rate,closed_accuracy,token_recall\n";
    for (const auto & r : records) {
        os << r.config.gen_length << "," << r.config.block_length << "," << r.config.steps << ","
           << remask_name(r.config.remask_mode) << "," << predict_name(r.config.predict_mode)
           << "," << fmt(r.config.temperature) << "," << r.config.seed << "," << r.queries << ","
           << fmt(r.predictor_calls_per_query) << "," << fmt(r.timing.t_per_query) << ","
           << fmt(r.timing.w_per_query) << "," << fmt(r.timing.t_per_word) << ","
           << fmt(r.repetition) << "," << fmt(r.closed_acc) << "," << fmt(r.recall) << "\n";
    }
}

void write_sweep_csv_file(const std::string & path, const std::vector<MetricsRecord> & records,
                          const std::vector<std::pair<std::string, std::string>> & header) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    write_sweep_csv(f, records, header);
}

}  // namespace mdlm
