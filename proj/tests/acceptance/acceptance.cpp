// Acceptance suite: nine numbered criteria, each printing one pass/fail
// line. Criterion 6 trains the end-to-end toy pipeline and leaves its
// artifacts (checkpoint, eval corpus) for criterion 7's sweep.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mdlm/checkpoint.hpp"
#include "mdlm/corpus.hpp"
#include "mdlm/diffusion.hpp"
#include "mdlm/metrics.hpp"
#include "mdlm/sampler.hpp"
#include "mdlm/sweep.hpp"
#include "mdlm/tokenizer.hpp"
#include "mdlm/toyvqa.hpp"
#include "mdlm/trainer.hpp"
#include "support/oracles.hpp"

using namespace mdlm;
using namespace mdlm::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// ---------------------------------------------------------------------- 1
Outcome criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    Vocab v;
    v.size = 3;
    const int len = 8;
    TokenSequence x0;
    for (int i = 0; i < len; ++i) {
        x0.ids.push_back(i % 3);
    }
    const int draws = 100000;
    double worst_marginal = 0.0;
    double worst_corr = 0.0;
    for (double t : {0.1, 0.3, 0.7}) {
        Pcg32 rng(91, static_cast<uint64_t>(1000 * t));
        std::vector<int> count(len, 0);
        std::vector<std::vector<int>> joint(len, std::vector<int>(len, 0));
        for (int d = 0; d < draws; ++d) {
            MaskedSequence xt = forward_mask(x0, t, v, rng);
            for (int i = 0; i < len; ++i) {
                if (xt.ids[i] != v.mask_id()) {
                    continue;
                }
                count[i]++;
                for (int j = i + 1; j < len; ++j) {
                    if (xt.ids[j] == v.mask_id()) {
                        joint[i][j]++;
                    }
                }
            }
        }
        for (int i = 0; i < len; ++i) {
            worst_marginal =
                std::max(worst_marginal, std::abs(count[i] / double(draws) - t));
            for (int j = i + 1; j < len; ++j) {
                const double pi = count[i] / double(draws);
                const double pj = count[j] / double(draws);
                const double pij = joint[i][j] / double(draws);
                const double corr =
                    (pij - pi * pj) / std::sqrt(pi * (1 - pi) * pj * (1 - pj));
                worst_corr = std::max(worst_corr, std::abs(corr));
            }
        }
    }
    const double elapsed = seconds_since(t0);
    Outcome out;
    out.pass = worst_marginal < 0.005 && worst_corr < 0.01 && elapsed < 10.0;
    out.detail = "max |masked_fraction - t| = " + fmt(worst_marginal, 5) +
                 " (limit 0.005), max |pairwise corr| = " + fmt(worst_corr, 5) +
                 " (limit 0.01), runtime " + fmt(elapsed, 1) + "s (limit 10s)";
    return out;
}

// ---------------------------------------------------------------------- 2
Outcome criterion2() {
    const auto t0 = std::chrono::steady_clock::now();
    const Vocab vocab{2};
    // equal-mass product dataset: the unique 2-sequence family for which
    // the factorized reverse chain is exact
    TinyDataset data({{0, 0}, {0, 1}}, {0.5, 0.5});
    DataPosteriorPredictor oracle(data, vocab);

    auto enumerated = enumerate_chain(data, vocab, {1.0, 0.5, 0.0});
    double enum_err = 0.0;
    enum_err = std::max(enum_err, std::abs(enumerated[{0, 0}] - 0.5));
    enum_err = std::max(enum_err, std::abs(enumerated[{0, 1}] - 0.5));
    for (const auto & [ids, p] : enumerated) {
        if (!(ids == std::vector<TokenId>{0, 0}) && !(ids == std::vector<TokenId>{0, 1})) {
            enum_err = std::max(enum_err, std::abs(p));
        }
    }

    SamplerConfig cfg;
    cfg.gen_length = cfg.block_length = cfg.steps = 2;
    cfg.predict_mode = PredictMode::sample;
    cfg.temperature  = 1.0;
    cfg.remask_mode  = RemaskMode::random;

    std::map<std::vector<TokenId>, int> hist;
    const int runs = 100000;
    for (int i = 0; i < runs; ++i) {
        cfg.seed = 424200 + static_cast<uint64_t>(i);
        auto res = generate(oracle, std::nullopt, TokenSequence{}, cfg, vocab);
        hist[res.output.ids]++;
    }
    const double sigma = std::sqrt(0.25 / runs);
    double mc_err = 0.0;
    for (const auto & [ids, p] : enumerated) {
        const double freq = hist.count(ids) ? hist[ids] / double(runs) : 0.0;
        mc_err = std::max(mc_err, std::abs(freq - p));
    }
    for (const auto & [ids, n] : hist) {
        if (!enumerated.count(ids)) {
            mc_err = 1.0;  // generated something outside the enumerated support
        }
    }

    const double elapsed = seconds_since(t0);
    Outcome out;
    out.pass = enum_err < 1e-12 && mc_err < 3.0 * sigma && elapsed < 60.0;
    out.detail = "enumerated-vs-data max error = " + fmt(enum_err, 15) +
                 " (exact), MC-vs-enumerated max deviation = " + fmt(mc_err, 5) + " (3-sigma = " +
                 fmt(3.0 * sigma, 5) + "), runtime " + fmt(elapsed, 1) + "s (limit 60s)";
    return out;
}

// ---------------------------------------------------------------------- 3
Outcome criterion3() {
    Vocab v4{4};
    Vocab v8{8};

    // unconditional scalar case: one masked position, t=0.5, p(true)=0.25
    TokenSequence x0{{3}};
    MaskedSequence xt{{v4.mask_id()}, 0.5};
    Matrix probs(1, 4);
    probs.fill(0.25);
    const double lu = loss_unconditional(x0, xt, probs, v4);
    const double err_u = std::abs(lu - 2.7725887222397812);

    // conditioned scalar case: two masked response tokens, t=0.25
    TokenSequence r0{{4, 5}};
    MaskedSequence rt{{v8.mask_id(), v8.mask_id()}, 0.25};
    Matrix probs2(2, 8);
    probs2(0, 4) = 0.5;
    probs2(1, 5) = 0.2;
    const double lc = loss_conditional(r0, rt, probs2, v8);
    const double err_c = std::abs(lc - 9.2103403719761836);

    // prompt-row perturbation leaves the conditional loss bitwise unchanged
    Matrix grid(5, 8);
    grid.fill(0.125);
    grid(3, 4) = 0.5;
    grid(4, 5) = 0.2;
    const double a = loss_conditional(r0, rt, grid, v8, 3);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 8; ++c) {
            grid(r, c) = 999.0 + r + c;
        }
    }
    const double b = loss_conditional(r0, rt, grid, v8, 3);
    const bool bitwise = std::memcmp(&a, &b, sizeof(double)) == 0;

    Outcome out;
    out.pass = err_u < 1e-9 && err_c < 1e-9 && bitwise;
    out.detail = "unconditional |err| = " + fmt(err_u, 12) + ", conditional |err| = " +
                 fmt(err_c, 12) + " (limits 1e-9), prompt perturbation bitwise invariant: " +
                 (bitwise ? "yes" : "NO");
    return out;
}

// ---------------------------------------------------------------------- 4
Outcome criterion4() {
    const auto t0 = std::chrono::steady_clock::now();
    Dims d;
    d.vocab_size  = 12;
    d.feature_dim = 4;
    d.d_model     = 8;
    d.d_ff        = 16;
    d.n_layers    = 2;
    d.n_heads     = 2;
    d.max_len     = 32;
    d.proj_hidden = 8;
    PredictorParams p = init_params(77, d);
    const Vocab vocab{d.vocab_size};
    const TokenId M = d.vocab_size;

    FeatureVec f = {0.5, -0.3, 0.8, -0.1};
    TokenSequence prompt{{4, 0, 11}};
    TokenSequence r0{{2, 7, 3, 9, 1}};
    MaskedSequence rt{{M, 7, M, M, 1}, 0.4};

    auto loss_fn = [&]() {
        LogitsGrid g = predict(p, f, prompt, rt);
        return loss_conditional(r0, rt, g.probs, vocab);
    };

    Gradients grads = Gradients::shaped(d);
    {
        ForwardCacheHandle cache;
        auto layout = ConversationLayout::single_turn(f, prompt, rt.ids);
        LogitsGrid g = predict_recorded(p, layout, cache.get());
        Matrix dscores(g.scores.rows, g.scores.cols);
        for (int i = 0; i < g.scores.rows; ++i) {
            if (rt.ids[i] != M) {
                continue;
            }
            for (int vv = 0; vv < g.scores.cols; ++vv) {
                dscores(i, vv) = g.probs(i, vv) / rt.t;
            }
            dscores(i, r0.ids[i]) -= 1.0 / rt.t;
        }
        backward(p, cache.get(), dscores, grads);
    }

    auto pe = tensor_entries(p);
    auto ge = tensor_entries(grads);
    Pcg32 rng(5150, 30);
    double max_rel = 0.0;
    for (int k = 0; k < 200; ++k) {
        const size_t ti = rng.next_below(static_cast<uint32_t>(pe.size()));
        const size_t wi = rng.next_below(static_cast<uint32_t>(pe[ti].mat->count()));
        const double fd = central_difference(pe[ti].mat->v[wi], loss_fn, 1e-4);
        max_rel = std::max(max_rel, relative_error(fd, ge[ti].mat->v[wi]));
    }
    const double elapsed = seconds_since(t0);
    Outcome out;
    out.pass = max_rel < 1e-3 && elapsed < 60.0;
    out.detail = "max relative error over 200 random weights = " + fmt(max_rel, 7) +
                 " (limit 1e-3), runtime " + fmt(elapsed, 1) + "s (limit 60s)";
    return out;
}

// ---------------------------------------------------------------------- 5
Outcome criterion5() {
    const Vocab vocab{10};
    Pcg32 rng(808, 31);
    int combos = 0;
    bool all_exact = true;
    bool calls_ok = true;
    bool isolation_ok = true;
    for (int L : {4, 8}) {
        TokenSequence target;
        for (int i = 0; i < L; ++i) {
            target.ids.push_back(static_cast<TokenId>(rng.next_below(vocab.size)));
        }
        PointMassPredictor oracle(target, vocab.size);
        for (int B = 1; B <= L; ++B) {
            for (int Z = 1; Z <= L; ++Z) {
                SamplerConfig cfg;
                cfg.gen_length   = L;
                cfg.block_length = B;
                cfg.steps        = Z;
                if (!validate_sampler_config(cfg).ok()) {
                    continue;
                }
                combos++;
                auto res = generate(oracle, std::nullopt, TokenSequence{}, cfg, vocab);
                all_exact = all_exact && res.output.ids == target.ids;
                calls_ok = calls_ok && res.trace.predictor_calls() == Z &&
                           res.trace.total_unmasked() == L;
                // block isolation: commitments stay inside the active block
                // and blocks finish strictly left to right
                int highest_done_block = -1;
                std::map<int, int> committed_in_block;
                for (const auto & e : res.trace.entries) {
                    for (int pos : e.positions) {
                        if (pos / B != e.block) {
                            isolation_ok = false;
                        }
                        if (e.block < highest_done_block) {
                            isolation_ok = false;
                        }
                        committed_in_block[e.block]++;
                        if (committed_in_block[e.block] == B) {
                            highest_done_block = std::max(highest_done_block, e.block);
                        }
                    }
                    if (e.block > 0 && committed_in_block[e.block - 1] != B) {
                        isolation_ok = false;
                    }
                }
            }
        }
    }
    Outcome out;
    out.pass = combos >= 6 && all_exact && calls_ok && isolation_ok;
    out.detail = "valid (L,B,Z) combos with L in {4,8}: " + std::to_string(combos) +
                 " (needed >= 6), target reproduced exactly: " + (all_exact ? "yes" : "NO") +
                 ", predictor calls == Z with full coverage: " + (calls_ok ? "yes" : "NO") +
                 ", block isolation: " + (isolation_ok ? "yes" : "NO");
    return out;
}

// ---------------------------------------------------------------------- 6
struct PipelineArtifacts {
    std::string checkpoint;
    std::string eval_corpus;
    std::string sweep_corpus;
    std::string features;
};

PipelineArtifacts artifact_paths(const std::string & dir) {
    return {dir + "/toy_model.ckpt", dir + "/toy_eval.tsv", dir + "/toy_sweep.tsv",
            dir + "/toy_features.tsv"};
}

Outcome criterion6(const std::string & dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const Vocab vocab = Vocab::byte_default();
    const PipelineArtifacts paths = artifact_paths(dir);

    ToyVqaSpec spec;
    spec.instances = 2000;
    spec.seed      = 7;
    ToyVqaData data = make_toy_vqa(spec, vocab);

    Dims dims = Dims::desk_default();
    PredictorParams params = init_params(1, dims);
    TrainerState state;
    state.seed = 1;

    // stage 1: projector-only alignment on captions
    PredictorParams before_align = params;
    StageConfig align = StageConfig::desk_preset(Stage::alignment);
    align.batch_size = 16;
    auto align_losses = train_stage(data.alignment, params, state, align, vocab);

    bool backbone_frozen = true;
    {
        auto ea = tensor_entries(params);
        auto eb = tensor_entries(before_align);
        for (size_t i = 0; i < ea.size(); ++i) {
            if (ea[i].group == WeightGroup::backbone && ea[i].mat->v != eb[i].mat->v) {
                backbone_frozen = false;
            }
        }
    }
    std::cout << "  stage 1 (alignment) losses:";
    for (double l : align_losses) {
        std::cout << " " << fmt(l, 3);
    }
    std::cout << " | backbone bitwise frozen: " << (backbone_frozen ? "yes" : "NO") << "\n";

    // stage 2: multi-turn instruction tuning
    StageConfig md = StageConfig::desk_preset(Stage::md_sft);
    md.batch_size = 16;
    auto md_losses = train_stage(data.multi_turn, params, state, md, vocab);
    std::cout << "  stage 2 (md-sft) losses:";
    for (double l : md_losses) {
        std::cout << " " << fmt(l, 3);
    }
    std::cout << "\n";

    // stage 3: single-turn dataset-specific tuning
    StageConfig sd = StageConfig::desk_preset(Stage::sd_sft);
    sd.batch_size = 16;
    auto sd_losses = train_stage(data.single_turn_train, params, state, sd, vocab);
    std::cout << "  stage 3 (sd-sft) losses:";
    for (double l : sd_losses) {
        std::cout << " " << fmt(l, 3);
    }
    std::cout << "\n";

    // held-out closed accuracy at the downstream setting L = B = Z = 64
    SamplerConfig cfg;
    cfg.gen_length = cfg.block_length = cfg.steps = 64;
    auto outs = run_config(data.single_turn_eval, params, cfg, vocab, 99);
    MetricsRecord rec = score_outputs(cfg, outs, data.single_turn_eval, vocab);

    save_checkpoint(paths.checkpoint, params, state.opt, state.seed);
    save_dialogue_corpus(paths.eval_corpus, data.single_turn_eval, vocab);
    data.features.save(paths.features);

    // a wider corpus for the criterion-7 sweep: the held-out split plus a
    // slice of training questions, responses cut back to the bare answer
    {
        std::vector<DialogueInstance> sweep_corpus = data.single_turn_eval;
        for (size_t i = 0; i < 200 && i < data.single_turn_train.size(); ++i) {
            DialogueInstance inst = data.single_turn_train[i];
            inst.turns[0].response = truncate_at_eot(inst.turns[0].response, vocab);
            sweep_corpus.push_back(std::move(inst));
        }
        save_dialogue_corpus(paths.sweep_corpus, sweep_corpus, vocab);
    }

    const double elapsed = seconds_since(t0);
    Outcome out;
    out.pass = rec.closed_acc >= 0.95 && backbone_frozen && elapsed < 900.0;
    out.detail = "held-out closed accuracy = " + fmt(rec.closed_acc, 4) +
                 " (needed >= 0.95, n=" + std::to_string(rec.queries) +
                 "), stage-1 backbone bitwise frozen: " + (backbone_frozen ? "yes" : "NO") +
                 ", runtime " + fmt(elapsed, 1) + "s (limit 900s)";
    return out;
}

// ---------------------------------------------------------------------- 7
Outcome criterion7(const std::string & dir) {
    const PipelineArtifacts paths = artifact_paths(dir);
    std::ifstream probe(paths.checkpoint);
    if (!probe) {
        return {false, "missing " + paths.checkpoint + " (run criterion 6 first)"};
    }
    probe.close();

    const Vocab vocab = Vocab::byte_default();
    Checkpoint ckpt = load_checkpoint(paths.checkpoint);
    FeatureTable table = FeatureTable::load(paths.features);
    auto corpus = load_dialogue_corpus(paths.sweep_corpus, CorpusMode::dialogue, vocab, &table,
                                       ckpt.params.dims.feature_dim);

    const std::vector<int> zs = {64, 32, 16, 8};  // descending
    std::vector<SamplerConfig> grid;
    for (int Z : zs) {
        SamplerConfig cfg;
        cfg.gen_length   = 64;
        cfg.block_length = 64;
        cfg.steps        = Z;
        grid.push_back(cfg);
    }
    SweepOptions opts;
    opts.seed    = 4242;
    opts.threads = 2;
    auto recs = run_sweep(corpus, ckpt.params, grid, vocab, opts);

    bool calls_ok = true;
    for (size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].predictor_calls_per_query != static_cast<double>(zs[i])) {
            calls_ok = false;
        }
    }
    // as Z decreases: repetition non-decreasing, score non-increasing
    bool rep_monotone = true;
    bool score_monotone = true;
    for (size_t i = 1; i < recs.size(); ++i) {
        if (recs[i].repetition < recs[i - 1].repetition - 1e-12) {
            rep_monotone = false;
        }
        if (recs[i].closed_acc > recs[i - 1].closed_acc + 1e-12) {
            score_monotone = false;
        }
    }
    const bool rep_strict = recs.back().repetition > recs.front().repetition;

    std::ostringstream table_out;
    table_out << "  Z  calls  repetition  closed_acc  w_per_query\n";
    for (size_t i = 0; i < recs.size(); ++i) {
        table_out << "  " << zs[i] << "  " << recs[i].predictor_calls_per_query << "  "
                  << fmt(recs[i].repetition, 4) << "  " << fmt(recs[i].closed_acc, 4) << "  "
                  << fmt(recs[i].timing.w_per_query, 1) << "\n";
    }
    std::cout << table_out.str();

    Outcome out;
    out.pass = calls_ok && rep_monotone && score_monotone && rep_strict;
    out.detail = std::string("predictor calls equal Z: ") + (calls_ok ? "yes" : "NO") +
                 ", repetition non-decreasing as Z drops: " + (rep_monotone ? "yes" : "NO") +
                 ", repetition(Z=8) > repetition(Z=64): " + (rep_strict ? "yes" : "NO") +
                 " (" + fmt(recs.back().repetition, 4) + " vs " + fmt(recs.front().repetition, 4) +
                 "), score non-increasing as Z drops: " + (score_monotone ? "yes" : "NO");
    return out;
}

// ---------------------------------------------------------------------- 8
#ifdef MDLM_CLI_PATH

int run_shell(const std::string & cmd) {
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) {
        return -1;
    }
    return WEXITSTATUS(status);
}

std::string slurp(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        return "<missing " + path + ">";
    }
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// drops wall-clock values: latency_us=... / total_seconds lines in traces,
// the t_per_query and t_per_word columns in sweep csv rows
std::string strip_timings(const std::string & text) {
    std::istringstream is(text);
    std::ostringstream os;
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("# total_seconds=", 0) == 0) {
            os << "# total_seconds=X\n";
            continue;
        }
        auto lat = line.find("latency_us=");
        if (lat != std::string::npos) {
            auto end = line.find(' ', lat);
            line = line.substr(0, lat) + "latency_us=X" +
                   (end == std::string::npos ? "" : line.substr(end));
            os << line << "\n";
            continue;
        }
        // csv data row: zero the timing columns (9 and 11, 0-based)
        if (!line.empty() && line[0] != '#' && std::count(line.begin(), line.end(), ',') == 14) {
            std::vector<std::string> cols;
            std::istringstream ls(line);
            std::string col;
            while (std::getline(ls, col, ',')) {
                cols.push_back(col);
            }
            if (cols[0] != "L") {
                cols[9]  = "X";
                cols[11] = "X";
            }
            for (size_t i = 0; i < cols.size(); ++i) {
                os << (i ? "," : "") << cols[i];
            }
            os << "\n";
            continue;
        }
        os << line << "\n";
    }
    return os.str();
}

Outcome criterion8(const std::string & dir) {
    const Vocab vocab = Vocab::byte_default();
    const std::string bin = MDLM_CLI_PATH;

    // small corpus for the cli round trips; text files cannot carry the
    // filled responses' embedded end-of-text id
    ToyVqaSpec spec;
    spec.instances = 120;
    spec.seed      = 3;
    spec.fill_single_turn = false;
    ToyVqaData data = make_toy_vqa(spec, vocab);
    save_dialogue_corpus(dir + "/c8_train.tsv", data.single_turn_train, vocab);
    save_dialogue_corpus(dir + "/c8_eval.tsv", data.single_turn_eval, vocab);
    data.features.save(dir + "/c8_features.tsv");

    std::vector<std::string> mismatches;
    auto normalize_out_names = [&](std::string text) {
        // the two runs differ only in their --out argument, which train
        // echoes back; mask it before comparing
        for (const char * name : {"c8_a.ckpt", "c8_b.ckpt"}) {
            for (size_t at = text.find(name); at != std::string::npos;
                 at = text.find(name, at)) {
                text.replace(at, std::strlen(name), "OUT");
            }
        }
        return text;
    };
    auto expect_same = [&](const std::string & what, const std::string & fa,
                           const std::string & fb, bool timed) {
        std::string a = normalize_out_names(slurp(fa));
        std::string b = normalize_out_names(slurp(fb));
        if (timed) {
            a = strip_timings(a);
            b = strip_timings(b);
        }
        if (a != b) {
            mismatches.push_back(what);
        }
    };

    const std::string train_cmd =
        "\"" + bin + "\" train --stage sd-sft --corpus " + dir + "/c8_train.tsv --features " +
        dir + "/c8_features.tsv --seed 11 --epochs 1 --batch-size 8 --dim 32 --ffn 64 "
        "--layers 1 --heads 2 --max-len 96";
    bool exit_ok = true;
    exit_ok &= run_shell(train_cmd + " --out " + dir + "/c8_a.ckpt > " + dir +
                         "/c8_train_a.log 2>&1") == 0;
    exit_ok &= run_shell(train_cmd + " --out " + dir + "/c8_b.ckpt > " + dir +
                         "/c8_train_b.log 2>&1") == 0;
    expect_same("train checkpoint", dir + "/c8_a.ckpt", dir + "/c8_b.ckpt", false);
    expect_same("train log", dir + "/c8_train_a.log", dir + "/c8_train_b.log", false);

    const std::string gen_cmd =
        "\"" + bin + "\" generate --checkpoint " + dir + "/c8_a.ckpt --features " + dir +
        "/c8_features.tsv --image-id img00001 --prompt \"what color is the object?\" "
        "--gen-length 32 --block-length 16 --steps 32 --seed 5";
    exit_ok &= run_shell(gen_cmd + " --out " + dir + "/c8_gen_a.txt --trace " + dir +
                         "/c8_trace_a.txt 2>/dev/null") == 0;
    exit_ok &= run_shell(gen_cmd + " --out " + dir + "/c8_gen_b.txt --trace " + dir +
                         "/c8_trace_b.txt 2>/dev/null") == 0;
    expect_same("generate output", dir + "/c8_gen_a.txt", dir + "/c8_gen_b.txt", false);
    expect_same("generate trace", dir + "/c8_trace_a.txt", dir + "/c8_trace_b.txt", true);

    const std::string sweep_cmd =
        "\"" + bin + "\" sweep --corpus " + dir + "/c8_eval.tsv --features " + dir +
        "/c8_features.tsv --checkpoint " + dir + "/c8_a.ckpt --gen-length 16 --block-length 8 "
        "--steps-grid 4,8,16 --seed 3";
    exit_ok &= run_shell(sweep_cmd + " --out " + dir + "/c8_sweep_a.csv > /dev/null 2>&1") == 0;
    exit_ok &= run_shell(sweep_cmd + " --out " + dir + "/c8_sweep_b.csv > /dev/null 2>&1") == 0;
    expect_same("sweep csv", dir + "/c8_sweep_a.csv", dir + "/c8_sweep_b.csv", true);

    const std::string eval_cmd =
        "\"" + bin + "\" eval --corpus " + dir + "/c8_eval.tsv --features " + dir +
        "/c8_features.tsv --checkpoint " + dir + "/c8_a.ckpt --gen-length 16 --block-length 16 "
        "--steps 16 --seed 9";
    exit_ok &= run_shell(eval_cmd + " --out " + dir + "/c8_eval_a.csv > /dev/null 2>&1") == 0;
    exit_ok &= run_shell(eval_cmd + " --out " + dir + "/c8_eval_b.csv > /dev/null 2>&1") == 0;
    expect_same("eval csv", dir + "/c8_eval_a.csv", dir + "/c8_eval_b.csv", true);

    exit_ok &= run_shell("\"" + bin + "\" inspect-trace --trace " + dir + "/c8_trace_a.txt > " +
                         dir + "/c8_inspect_a.txt 2>&1") == 0;
    exit_ok &= run_shell("\"" + bin + "\" inspect-trace --trace " + dir + "/c8_trace_a.txt > " +
                         dir + "/c8_inspect_b.txt 2>&1") == 0;
    expect_same("inspect-trace output", dir + "/c8_inspect_a.txt", dir + "/c8_inspect_b.txt",
                false);

    Outcome out;
    out.pass = exit_ok && mismatches.empty();
    if (!exit_ok) {
        out.detail = "a subcommand exited non-zero";
    } else if (!mismatches.empty()) {
        out.detail = "non-identical outputs: ";
        for (const auto & m : mismatches) {
            out.detail += m + "; ";
        }
    } else {
        out.detail =
            "train/generate/sweep/eval/inspect-trace each run twice with identical "
            "inputs: all outputs bitwise identical (timings excluded)";
    }
    return out;
}

#else
Outcome criterion8(const std::string &) {
    return {false, "acceptance built without the cli binary"};
}
#endif

// ---------------------------------------------------------------------- 9
Outcome criterion9(const std::string & dir) {
    const Vocab vocab = Vocab::byte_default();
    Dims d = Dims::desk_default();
    d.d_model = 32;
    d.d_ff    = 64;
    d.proj_hidden = 32;

    ToyVqaSpec spec;
    spec.instances = 60;
    spec.seed      = 21;
    ToyVqaData data = make_toy_vqa(spec, vocab);

    StageConfig cfg = StageConfig::desk_preset(Stage::sd_sft);
    cfg.batch_size = 8;
    const uint64_t total = 20;

    PredictorParams pa = init_params(17, d);
    TrainerState sa;
    sa.seed = 313;
    sa.opt  = OptimizerState::shaped(d);
    train_steps(data.single_turn_train, pa, sa, cfg, vocab, 10, total);

    const std::string path = dir + "/c9_resume.ckpt";
    save_checkpoint(path, pa, sa.opt, sa.seed);

    // round trip is bitwise
    Checkpoint ckpt = load_checkpoint(path);
    bool roundtrip = ckpt.seed == sa.seed && ckpt.opt.step == sa.opt.step;
    {
        auto ea = tensor_entries(pa);
        auto eb = tensor_entries(ckpt.params);
        for (size_t i = 0; i < ea.size(); ++i) {
            roundtrip = roundtrip && ea[i].mat->v == eb[i].mat->v;
        }
        auto ma = tensor_entries(sa.opt.m);
        auto mb = tensor_entries(ckpt.opt.m);
        for (size_t i = 0; i < ma.size(); ++i) {
            roundtrip = roundtrip && ma[i].mat->v == mb[i].mat->v;
        }
    }

    // ten further steps, resumed vs uninterrupted
    train_steps(data.single_turn_train, pa, sa, cfg, vocab, 10, total);
    TrainerState sb;
    sb.seed = ckpt.seed;
    sb.opt  = std::move(ckpt.opt);
    train_steps(data.single_turn_train, ckpt.params, sb, cfg, vocab, 10, total);

    bool resume_bitwise = sa.opt.step == sb.opt.step;
    {
        auto ea = tensor_entries(pa);
        auto eb = tensor_entries(ckpt.params);
        for (size_t i = 0; i < ea.size(); ++i) {
            resume_bitwise = resume_bitwise && ea[i].mat->v == eb[i].mat->v;
        }
    }

    Outcome out;
    out.pass = roundtrip && resume_bitwise;
    out.detail = std::string("save/load round trip bitwise: ") + (roundtrip ? "yes" : "NO") +
                 ", resume equals uninterrupted training over 10 further steps: " +
                 (resume_bitwise ? "yes" : "NO");
    return out;
}

}  // namespace

int main(int argc, char ** argv) {
    int criterion = 0;  // 0 = all
    std::string artifacts = "acceptance_artifacts";
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) {
            criterion = std::atoi(argv[++i]);
        } else if (arg == "--artifacts" && i + 1 < argc) {
            artifacts = argv[++i];
        } else if (arg == "--all") {
            criterion = 0;
        } else {
            std::cerr << "usage: acceptance [--criterion N] [--artifacts DIR]\n";
            return 2;
        }
    }

    const char * names[10] = {
        "",
        "forward-process marginals and independence",
        "reverse-process exactness (enumeration vs sampling)",
        "loss correctness and prompt invariance",
        "analytic gradients vs central finite differences",
        "oracle-predictor generation conformance",
        "end-to-end three-stage toy pipeline accuracy",
        "sampling-step trade-off trends (Z sweep)",
        "subcommand determinism at fixed seed",
        "checkpoint round trip and bitwise resume",
    };

    int failures = 0;
    auto run_one = [&](int n) {
        Outcome out;
        try {
            switch (n) {
                case 1: out = criterion1(); break;
                case 2: out = criterion2(); break;
                case 3: out = criterion3(); break;
                case 4: out = criterion4(); break;
                case 5: out = criterion5(); break;
                case 6: out = criterion6(artifacts); break;
                case 7: out = criterion7(artifacts); break;
                case 8: out = criterion8(artifacts); break;
                case 9: out = criterion9(artifacts); break;
                default:
                    std::cerr << "no criterion " << n << "\n";
                    failures++;
                    return;
            }
        } catch (const std::exception & e) {
            out.pass   = false;
            out.detail = std::string("exception: ") + e.what();
        }
        std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << names[n]
                  << " -- " << out.detail << "\n";
        if (!out.pass) {
            failures++;
        }
    };

    if (criterion == 0) {
        for (int n = 1; n <= 9; ++n) {
            run_one(n);
        }
    } else {
        run_one(criterion);
    }
    return failures == 0 ? 0 : 1;
}
