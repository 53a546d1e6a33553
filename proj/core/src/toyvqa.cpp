#include "mdlm/toyvqa.hpp"

#include <array>
#include <cstdio>
#include <stdexcept>

#include "mdlm/rng.hpp"
#include "mdlm/tokenizer.hpp"

namespace mdlm {

namespace {

// value words chosen with distinct first letters inside each category so
// partially committed answers stay unambiguous
const std::array<const char *, 4> kColors = {"red", "blue", "green", "pink"};
const std::array<const char *, 4> kShapes = {"star", "ring", "cube", "disc"};
const std::array<const char *, 3> kSizes  = {"big", "mid", "tiny"};
const std::array<const char *, 3> kCounts = {"one", "two", "six"};

// one-hot blocks for the four attributes plus two spare dimensions, so the
// table matches the default 16-wide feature interface
constexpr int kDim = 4 + 4 + 3 + 3 + 2;

struct Combo {
    int color, shape, size, count;
};

FeatureVec encode(const Combo & c) {
    FeatureVec v(kDim, 0.0);
    v[c.color] = 1.0;
    v[4 + c.shape] = 1.0;
    v[8 + c.size] = 1.0;
    v[11 + c.count] = 1.0;
    return v;
}

const std::array<const char *, 4> kQuestions = {
    "color?",
    "shape?",
    "size?",
    "count?",
};

std::string answer_for(const Combo & c, int question) {
    switch (question) {
        case 0: return kColors[c.color];
        case 1: return kShapes[c.shape];
        case 2: return kSizes[c.size];
        default: return kCounts[c.count];
    }
}

std::string caption_for(const Combo & c) {
    std::string s;
    s += kCounts[c.count];
    s += " ";
    s += kSizes[c.size];
    s += " ";
    s += kColors[c.color];
    s += " ";
    s += kShapes[c.shape];
    return s;
}

// Single-turn training responses fill the whole downstream generation
// window: answer, end-of-text, then free-running filler text. Without the
// fill, generation at L=64 runs the model far outside any trained response
// position and stray commitments corrupt the answer.
//
// The filler concatenates blocks drawn independently from {qeeqeeqee,
// qeqeqeqe}. The block choice is noise the model can never learn away, but
// it surfaces only every eight or nine letters; in between, the spelling is
// deterministic (q then e, a double e then q, never qq or a triple e), so a
// committed letter pins its whole neighborhood. The marginal mode at an
// unresolved position is e (about 0.58 of filler letters), while no valid
// sequence repeats it three times. A decoder with many refinement steps
// anchors a block and spells outward cleanly; a decoder that must commit
// several unresolved positions per step writes the mode letter into
// invalid runs. That is the sampling-steps/repetition trade-off of
// open-ended text in miniature.
constexpr int kResponseFill = 63;  // trainer appends the closing eot -> 64

std::vector<TokenId> filled_response(const std::string & answer, const Vocab & vocab,
                                     Pcg32 & rng) {
    std::vector<TokenId> ids;
    for (unsigned char ch : answer) {
        ids.push_back(static_cast<TokenId>(ch));
    }
    ids.push_back(vocab.eot_id);
    while (ids.size() < kResponseFill) {
        const char * word = rng.next_below(2) == 0 ? "qeeqeeqee" : "qeqeqeqe";
        for (const char * ch = word; *ch != '\0' && ids.size() < kResponseFill; ++ch) {
            ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(*ch)));
        }
    }
    return ids;
}

}  // namespace

int toy_vqa_feature_dim() { return kDim; }

ToyVqaData make_toy_vqa(const ToyVqaSpec & spec, const Vocab & vocab) {
    if (spec.instances < 10) {
        throw std::invalid_argument("toy vqa corpus needs at least 10 instances");
    }
    if (spec.eval_fraction <= 0.0 || spec.eval_fraction >= 1.0) {
        throw std::invalid_argument("eval_fraction must be in (0, 1)");
    }
    ToyVqaData data;
    data.feature_dim  = kDim;
    data.features.dim = kDim;

    Pcg32 rng(spec.seed, stream::kCorpus);
    // separate stream so the instance layout is identical with fill on/off
    Pcg32 fill_rng(spec.seed, stream::sub(stream::kCorpus, 1));
    const int n_eval = std::max(1, static_cast<int>(spec.instances * spec.eval_fraction));

    for (int i = 0; i < spec.instances; ++i) {
        Combo c;
        c.color = static_cast<int>(rng.next_below(kColors.size()));
        c.shape = static_cast<int>(rng.next_below(kShapes.size()));
        c.size  = static_cast<int>(rng.next_below(kSizes.size()));
        c.count = static_cast<int>(rng.next_below(kCounts.size()));

        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "img%05d", i);
        std::string image_id = idbuf;
        data.features.rows[image_id] = encode(c);

        // alignment: caption conditioned on features alone
        {
            DialogueInstance inst;
            inst.image_id = image_id;
            inst.visual_features = encode(c);
            DialogueTurn turn;
            turn.response = tokenize(caption_for(c), vocab);
            inst.turns.push_back(std::move(turn));
            data.alignment.push_back(std::move(inst));
        }

        // multi-turn: two distinct questions about the same image
        const int q1 = static_cast<int>(rng.next_below(kQuestions.size()));
        int q2 = static_cast<int>(rng.next_below(kQuestions.size() - 1));
        if (q2 >= q1) {
            q2++;
        }
        {
            DialogueInstance inst;
            inst.image_id = image_id;
            inst.visual_features = encode(c);
            for (int q : {q1, q2}) {
                DialogueTurn turn;
                turn.prompt   = tokenize(kQuestions[q], vocab);
                turn.response = tokenize(answer_for(c, q), vocab);
                inst.turns.push_back(std::move(turn));
            }
            data.multi_turn.push_back(std::move(inst));
        }

        // single-turn; training responses carry the full-window fill, the
        // held-out split keeps the bare answer as its reference
        {
            const int q = static_cast<int>(rng.next_below(kQuestions.size()));
            DialogueInstance inst;
            inst.image_id = image_id;
            inst.visual_features = encode(c);
            DialogueTurn turn;
            turn.prompt = tokenize(kQuestions[q], vocab);
            if (i >= spec.instances - n_eval) {
                turn.response = tokenize(answer_for(c, q), vocab);
                inst.turns.push_back(std::move(turn));
                data.single_turn_eval.push_back(std::move(inst));
            } else {
                turn.response = spec.fill_single_turn
                                    ? TokenSequence{filled_response(answer_for(c, q), vocab, fill_rng)}
                                    : tokenize(answer_for(c, q), vocab);
                inst.turns.push_back(std::move(turn));
                data.single_turn_train.push_back(std::move(inst));
            }
        }
    }
    return data;
}

}  // namespace mdlm
