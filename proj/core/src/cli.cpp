#include "mdlm/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mdlm/checkpoint.hpp"
#include "mdlm/corpus.hpp"
#include "mdlm/sampler.hpp"
#include "mdlm/sweep.hpp"
#include "mdlm/tokenizer.hpp"
#include "mdlm/trainer.hpp"

namespace mdlm::cli {

namespace {

int env_threads() {
    const char * env = std::getenv("MDLM_THREADS");
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    int threads = std::max(1, std::min(hw, 4));
    if (env != nullptr) {
        int v = std::atoi(env);
        if (v >= 1) {
            threads = v;
        }
    }
    return threads;
}

struct GenFlags {
    int gen_length   = 64;
    int block_length = 64;
    int steps        = 64;
    uint64_t seed    = 0;
    std::string remasking = "low-confidence";
    double temperature    = 0.0;  // 0 selects greedy decoding
};

void add_gen_flags(CLI::App * cmd, GenFlags & g) {
    cmd->add_option("--gen-length", g.gen_length, "Generation length L");
    cmd->add_option("--block-length", g.block_length, "Block length B");
    cmd->add_option("--steps", g.steps, "Total sampling steps Z");
    cmd->add_option("--seed", g.seed, "Random seed");
    cmd->add_option("--remasking", g.remasking, "Remasking strategy")
        ->check(CLI::IsMember({"low-confidence", "random"}));
    cmd->add_option("--temperature", g.temperature,
                    "Sampling temperature; 0 means greedy decoding");
}

SamplerConfig to_config(const GenFlags & g) {
    SamplerConfig cfg;
    cfg.gen_length   = g.gen_length;
    cfg.block_length = g.block_length;
    cfg.steps        = g.steps;
    cfg.seed         = g.seed;
    cfg.remask_mode =
        g.remasking == "random" ? RemaskMode::random : RemaskMode::low_confidence;
    if (g.temperature > 0.0) {
        cfg.predict_mode = PredictMode::sample;
        cfg.temperature  = g.temperature;
    } else {
        cfg.predict_mode = PredictMode::greedy;
        cfg.temperature  = 1.0;
    }
    return cfg;
}

std::vector<int> parse_grid(const std::string & csv, const char * what) {
    std::vector<int> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t used = 0;
            int v = std::stoi(tok, &used);
            if (used != tok.size() || v <= 0) {
                throw std::invalid_argument(tok);
            }
            out.push_back(v);
        } catch (const std::exception &) {
            throw std::runtime_error(std::string("bad ") + what + " grid entry '" + tok + "'");
        }
    }
    if (out.empty()) {
        throw std::runtime_error(std::string("empty ") + what + " grid");
    }
    return out;
}

struct ModelArgs {
    std::string checkpoint;
    std::string features;
    uint64_t seed = 0;

    // dims for fresh initialization when no checkpoint is given
    int dim = 64, ffn = 256, layers = 2, heads = 4, max_len = 128, feature_dim = 16;
};

void add_model_flags(CLI::App * cmd, ModelArgs & m, bool with_dims) {
    cmd->add_option("--checkpoint", m.checkpoint, "Checkpoint file");
    cmd->add_option("--features", m.features, "Feature table file");
    if (with_dims) {
        cmd->add_option("--dim", m.dim, "Model width (fresh init)");
        cmd->add_option("--ffn", m.ffn, "Feed-forward width (fresh init)");
        cmd->add_option("--layers", m.layers, "Transformer layers (fresh init)");
        cmd->add_option("--heads", m.heads, "Attention heads (fresh init)");
        cmd->add_option("--max-len", m.max_len, "Positional table size (fresh init)");
        cmd->add_option("--feature-dim", m.feature_dim, "Visual feature dimension (fresh init)");
    }
}

struct LoadedModel {
    PredictorParams params;
    OptimizerState opt;
    uint64_t seed = 0;
};

LoadedModel load_or_init(const ModelArgs & m, const FeatureTable * table) {
    LoadedModel lm;
    if (!m.checkpoint.empty()) {
        Checkpoint ckpt = load_checkpoint(m.checkpoint);
        lm.params = std::move(ckpt.params);
        lm.opt    = std::move(ckpt.opt);
        lm.seed   = ckpt.seed;
        return lm;
    }
    Dims dims;
    dims.d_model     = m.dim;
    dims.d_ff        = m.ffn;
    dims.n_layers    = m.layers;
    dims.n_heads     = m.heads;
    dims.max_len     = m.max_len;
    dims.proj_hidden = m.dim;
    dims.feature_dim = table != nullptr ? table->dim : m.feature_dim;
    lm.params = init_params(m.seed, dims);
    lm.opt    = OptimizerState::shaped(dims);
    lm.seed   = m.seed;
    return lm;
}

std::optional<FeatureTable> maybe_load_table(const std::string & path) {
    if (path.empty()) {
        return std::nullopt;
    }
    return FeatureTable::load(path);
}

int cmd_train(const ModelArgs & margs, const std::string & stage_name,
              const std::string & corpus_path, const std::string & out_path, int epochs,
              int batch_size, double lr_projector, double lr_backbone) {
    const Vocab vocab = Vocab::byte_default();
    auto table = maybe_load_table(margs.features);

    Stage stage;
    if (stage_name == "alignment") {
        stage = Stage::alignment;
    } else if (stage_name == "md-sft") {
        stage = Stage::md_sft;
    } else {
        stage = Stage::sd_sft;
    }

    ModelArgs margs2 = margs;
    LoadedModel lm = load_or_init(margs2, table ? &*table : nullptr);
    lm.seed = margs.seed;  // a training run owns its seed

    const CorpusMode mode =
        stage == Stage::alignment ? CorpusMode::alignment : CorpusMode::dialogue;
    auto corpus = load_dialogue_corpus(corpus_path, mode, vocab, table ? &*table : nullptr,
                                       lm.params.dims.feature_dim);
    if (corpus.empty()) {
        throw std::runtime_error("corpus '" + corpus_path + "' is empty");
    }

    StageConfig cfg = StageConfig::desk_preset(stage);
    if (epochs > 0) {
        cfg.epochs = epochs;
    }
    if (batch_size > 0) {
        cfg.batch_size = batch_size;
    }
    if (lr_projector > 0.0) {
        cfg.lr_projector = lr_projector;
    }
    if (lr_backbone > 0.0) {
        cfg.lr_backbone = lr_backbone;
    }

    std::cout << "# stage=" << ::mdlm::stage_name(stage) << " corpus=" << corpus_path
              << " instances=" << corpus.size() << " epochs=" << cfg.epochs
              << " batch_size=" << cfg.batch_size << " lr_projector=" << cfg.lr_projector
              << " lr_backbone=" << cfg.lr_backbone << " seed=" << margs.seed << "\n";

    TrainerState state;
    state.seed = lm.seed;
    auto losses = train_stage(corpus, lm.params, state, cfg, vocab);
    for (size_t e = 0; e < losses.size(); ++e) {
        std::cout << "epoch " << (e + 1) << " mean_loss " << losses[e] << "\n";
    }

    save_checkpoint(out_path, lm.params, state.opt, state.seed);
    std::cout << "saved " << out_path << "\n";
    return 0;
}

int cmd_generate(const ModelArgs & margs, const GenFlags & gflags, const std::string & prompt_text,
                 const std::string & image_id, const std::string & out_path,
                 const std::string & trace_path, bool raw) {
    const Vocab vocab = Vocab::byte_default();
    auto table = maybe_load_table(margs.features);
    LoadedModel lm = load_or_init(margs, table ? &*table : nullptr);

    SamplerConfig cfg = to_config(gflags);
    require_valid(cfg);

    std::optional<FeatureVec> features;
    if (!image_id.empty()) {
        const int dim = lm.params.dims.feature_dim;
        if (table && table->rows.count(image_id)) {
            features = table->rows.at(image_id);
        } else {
            features = synthetic_feature_provider(image_id, dim);
        }
    }

    std::cerr << "# generate L=" << cfg.gen_length << " B=" << cfg.block_length
              << " Z=" << cfg.steps << " seed=" << cfg.seed << " remasking=" << gflags.remasking
              << " temperature=" << gflags.temperature << "\n";

    TokenSequence prompt = tokenize(prompt_text, vocab);
    GenerationResult res = generate(lm.params, features, prompt, cfg, vocab);

    const TokenSequence shown = raw ? res.output : truncate_at_eot(res.output, vocab);
    const std::string text = detokenize(shown, vocab);
    if (out_path.empty()) {
        std::cout << text << "\n";
    } else {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) {
            throw std::runtime_error("cannot open '" + out_path + "' for writing");
        }
        f << text << "\n";
    }
    if (!trace_path.empty()) {
        std::ofstream f(trace_path, std::ios::trunc);
        if (!f) {
            throw std::runtime_error("cannot open '" + trace_path + "' for writing");
        }
        write_trace(f, res.trace);
    }
    return 0;
}

int cmd_sweep(const ModelArgs & margs, const GenFlags & gflags, const std::string & corpus_path,
              const std::string & out_path, const std::string & length_grid,
              const std::string & block_grid, const std::string & steps_grid) {
    const Vocab vocab = Vocab::byte_default();
    auto table = maybe_load_table(margs.features);
    LoadedModel lm = load_or_init(margs, table ? &*table : nullptr);

    auto corpus = load_dialogue_corpus(corpus_path, CorpusMode::dialogue, vocab,
                                       table ? &*table : nullptr, lm.params.dims.feature_dim);
    if (corpus.empty()) {
        throw std::runtime_error("corpus '" + corpus_path + "' is empty");
    }

    std::vector<int> lengths = length_grid.empty() ? std::vector<int>{gflags.gen_length}
                                                   : parse_grid(length_grid, "gen-length");
    std::vector<int> blocks = block_grid.empty() ? std::vector<int>{gflags.block_length}
                                                 : parse_grid(block_grid, "block-length");
    std::vector<int> steps = steps_grid.empty() ? std::vector<int>{gflags.steps}
                                                : parse_grid(steps_grid, "steps");

    std::vector<SamplerConfig> grid;
    for (int L : lengths) {
        for (int B : blocks) {
            for (int Z : steps) {
                GenFlags g = gflags;
                g.gen_length   = L;
                g.block_length = B;
                g.steps        = Z;
                grid.push_back(to_config(g));
            }
        }
    }

    SweepOptions opts;
    opts.seed    = gflags.seed;
    opts.threads = env_threads();

    auto records = run_sweep(corpus, lm.params, grid, vocab, opts);

    std::vector<std::pair<std::string, std::string>> header = {
        {"corpus", corpus_path},
        {"checkpoint", margs.checkpoint.empty() ? "(fresh init)" : margs.checkpoint},
        {"queries", std::to_string(corpus.size())},
        {"seed", std::to_string(gflags.seed)},
        {"remasking", gflags.remasking},
        {"threads", std::to_string(opts.threads)},
    };
    if (out_path.empty()) {
        write_sweep_csv(std::cout, records, header);
    } else {
        write_sweep_csv_file(out_path, records, header);
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_inspect_trace(const std::string & trace_path) {
    std::ifstream f(trace_path);
    if (!f) {
        throw std::runtime_error("cannot open trace '" + trace_path + "'");
    }
    GenerationTrace trace = parse_trace(f);
    std::cout << "trace: L=" << trace.gen_length << " B=" << trace.block_length
              << " Z=" << trace.steps << " predictor_calls=" << trace.predictor_calls()
              << " emitted_tokens=" << trace.emitted_tokens
              << " total_seconds=" << trace.total_seconds << "\n";
    int masked = trace.gen_length;
    for (const auto & e : trace.entries) {
        const int before = masked;
        masked -= static_cast<int>(e.positions.size());
        std::cout << "step " << e.step << " | block " << e.block << " | t=" << e.t
                  << " -> s=" << e.s << " | masked " << before << " -> " << masked
                  << " | committed";
        for (size_t i = 0; i < e.positions.size(); ++i) {
            std::cout << " " << e.positions[i] << "(" << e.confidences[i] << ")";
        }
        std::cout << "\n";
    }
    if (masked != 0) {
        std::cout << "warning: trace leaves " << masked << " positions masked\n";
    }
    return 0;
}

}  // namespace

int dispatch(int argc, const char * const * argv) {
    CLI::App app{"masked-diffusion text generation engine"};
    app.require_subcommand(1);

    // train
    auto * train = app.add_subcommand("train", "Train one stage and save a checkpoint");
    ModelArgs train_margs;
    std::string stage_str, train_corpus, train_out;
    int epochs = 0, batch_size = 0;
    double lr_projector = 0.0, lr_backbone = 0.0;
    train->add_option("--stage", stage_str, "Training stage")
        ->required()
        ->check(CLI::IsMember({"alignment", "md-sft", "sd-sft"}));
    train->add_option("--corpus", train_corpus, "Dialogue corpus file")->required();
    train->add_option("--out", train_out, "Output checkpoint path")->required();
    train->add_option("--seed", train_margs.seed, "Random seed");
    train->add_option("--epochs", epochs, "Epochs (0 = stage preset)");
    train->add_option("--batch-size", batch_size, "Batch size (0 = stage preset)");
    train->add_option("--lr-projector", lr_projector, "Projector learning rate override");
    train->add_option("--lr-backbone", lr_backbone, "Backbone learning rate override");
    add_model_flags(train, train_margs, true);

    // generate
    auto * gen = app.add_subcommand("generate", "Generate a response");
    ModelArgs gen_margs;
    GenFlags gen_flags;
    std::string prompt_text, image_id, gen_out, gen_trace;
    bool gen_raw = false;
    gen->add_option("--prompt", prompt_text, "Prompt text");
    gen->add_option("--image-id", image_id, "Image id for visual conditioning");
    gen->add_option("--out", gen_out, "Write the response here instead of stdout");
    gen->add_option("--trace", gen_trace, "Write the generation trace here");
    gen->add_flag("--raw", gen_raw, "Print all L tokens without end-of-text truncation");
    add_gen_flags(gen, gen_flags);
    add_model_flags(gen, gen_margs, true);
    gen->get_option("--seed")->description("Random seed (also used for fresh init)");

    // sweep
    auto * sweep = app.add_subcommand("sweep", "Run a config grid over a corpus");
    ModelArgs sweep_margs;
    GenFlags sweep_flags;
    std::string sweep_corpus, sweep_out, length_grid, block_grid, steps_grid;
    sweep->add_option("--corpus", sweep_corpus, "Dialogue corpus file")->required();
    sweep->add_option("--out", sweep_out, "CSV output path (default stdout)");
    sweep->add_option("--length-grid", length_grid, "Comma-separated L values");
    sweep->add_option("--block-grid", block_grid, "Comma-separated B values");
    sweep->add_option("--steps-grid", steps_grid, "Comma-separated Z values");
    add_gen_flags(sweep, sweep_flags);
    add_model_flags(sweep, sweep_margs, true);

    // eval
    auto * eval = app.add_subcommand("eval", "Score one config over a corpus");
    ModelArgs eval_margs;
    GenFlags eval_flags;
    std::string eval_corpus, eval_out;
    eval->add_option("--corpus", eval_corpus, "Dialogue corpus file")->required();
    eval->add_option("--out", eval_out, "CSV output path (default stdout)");
    add_gen_flags(eval, eval_flags);
    add_model_flags(eval, eval_margs, true);

    // inspect-trace
    auto * inspect = app.add_subcommand("inspect-trace", "Render a generation trace");
    std::string inspect_path;
    inspect->add_option("--trace", inspect_path, "Trace file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp & e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        std::cerr << "usage error: " << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 2;
    }

    try {
        if (train->parsed()) {
            return cmd_train(train_margs, stage_str, train_corpus, train_out, epochs, batch_size,
                             lr_projector, lr_backbone);
        }
        if (gen->parsed()) {
            return cmd_generate(gen_margs, gen_flags, prompt_text, image_id, gen_out, gen_trace,
                                gen_raw);
        }
        if (sweep->parsed()) {
            return cmd_sweep(sweep_margs, sweep_flags, sweep_corpus, sweep_out, length_grid,
                             block_grid, steps_grid);
        }
        if (eval->parsed()) {
            return cmd_sweep(eval_margs, eval_flags, eval_corpus, eval_out, "", "", "");
        }
        if (inspect->parsed()) {
            return cmd_inspect_trace(inspect_path);
        }
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace mdlm::cli
