// Writes the synthetic VQA corpora used by the README walkthrough: a
// feature table plus alignment / multi-turn / single-turn corpus files.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "mdlm/corpus.hpp"
#include "mdlm/toyvqa.hpp"

int main(int argc, char ** argv) {
    CLI::App app{"toy VQA corpus generator"};
    std::string out_dir = ".";
    int instances = 2000;
    uint64_t seed = 7;
    app.add_option("--out-dir", out_dir, "Output directory (must exist)");
    app.add_option("--instances", instances, "Number of images");
    app.add_option("--seed", seed, "Corpus seed");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto vocab = mdlm::Vocab::byte_default();
        mdlm::ToyVqaSpec spec;
        spec.instances = instances;
        spec.seed      = seed;
        spec.fill_single_turn = false;  // text corpora carry the bare answers
        mdlm::ToyVqaData data = mdlm::make_toy_vqa(spec, vocab);

        data.features.save(out_dir + "/features.tsv");
        mdlm::save_dialogue_corpus(out_dir + "/alignment.tsv", data.alignment, vocab);
        mdlm::save_dialogue_corpus(out_dir + "/multi_turn.tsv", data.multi_turn, vocab);
        mdlm::save_dialogue_corpus(out_dir + "/single_turn_train.tsv", data.single_turn_train,
                                   vocab);
        mdlm::save_dialogue_corpus(out_dir + "/single_turn_eval.tsv", data.single_turn_eval,
                                   vocab);

        std::cout << "wrote " << out_dir << "/{features,alignment,multi_turn,"
                  << "single_turn_train,single_turn_eval}.tsv (" << instances << " images, seed "
                  << seed << ", feature_dim " << data.feature_dim << ")\n";
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
