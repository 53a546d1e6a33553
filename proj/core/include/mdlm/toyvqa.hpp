#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdlm/corpus.hpp"
#include "mdlm/types.hpp"

namespace mdlm {

// Synthetic visual question answering task. Each "image" is a tuple of
// four attributes (color, shape, size, count) encoded as concatenated
// one-hot blocks in a 16-dimensional feature vector; questions ask for one
// attribute and the answer is its value word. The task is deterministic
// given (features, question), so a small model can learn it outright.
struct ToyVqaSpec {
    int instances = 2000;
    uint64_t seed = 7;
    double eval_fraction = 0.1;

    // Fill single-turn training responses to the full 64-token generation
    // window (answer, end-of-text, caption tail). Filled responses carry an
    // embedded end-of-text id and can only live in memory; disable when the
    // corpus is written to text files.
    bool fill_single_turn = true;
};

struct ToyVqaData {
    int feature_dim = 0;
    FeatureTable features;

    std::vector<DialogueInstance> alignment;          // caption only, empty prompt
    std::vector<DialogueInstance> multi_turn;         // two QA turns per image
    std::vector<DialogueInstance> single_turn_train;  // one QA turn
    std::vector<DialogueInstance> single_turn_eval;   // held-out split
};

ToyVqaData make_toy_vqa(const ToyVqaSpec & spec, const Vocab & vocab);

// The number of feature dimensions the encoding uses (5+5+3+3).
int toy_vqa_feature_dim();

}  // namespace mdlm
