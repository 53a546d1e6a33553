#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mdlm {

using TokenId = int32_t;

// Vocabulary over token ids 0..size-1 plus one absorbing mask symbol.
// The mask id is fixed to `size` (one past the last real token) so the
// predictor's output head never has to cover it.
struct Vocab {
    int32_t size = 0;

    // Reserved ids inside the real token range. Only meaningful for the
    // byte-level vocabulary; both are never produced by the tokenizer.
    TokenId eot_id = -1;
    TokenId pad_id = -1;

    TokenId mask_id() const { return size; }

    bool is_real(TokenId id) const { return id >= 0 && id < size; }

    // 256 byte values + end-of-text + pad.
    static Vocab byte_default() {
        Vocab v;
        v.size   = 258;
        v.eot_id = 256;
        v.pad_id = 257;
        return v;
    }
};

// A clean token sequence: ids only, no mask symbol.
struct TokenSequence {
    std::vector<TokenId> ids;

    TokenSequence() = default;
    explicit TokenSequence(std::vector<TokenId> v) : ids(std::move(v)) {}

    size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }

    bool operator==(const TokenSequence & other) const = default;
};

// A partially masked sequence together with its noise level t.
struct MaskedSequence {
    std::vector<TokenId> ids;
    double t = 0.0;  // in [0, 1]

    size_t size() const { return ids.size(); }

    size_t mask_count(TokenId mask_id) const {
        size_t n = 0;
        for (TokenId id : ids) {
            if (id == mask_id) {
                n++;
            }
        }
        return n;
    }
};

using FeatureVec = std::vector<double>;

struct DialogueTurn {
    TokenSequence prompt;
    TokenSequence response;
};

// One training/eval instance: optional visual features plus ordered turns.
// By contract every response is non-empty and there is at least one turn;
// validate() enforces this where instances enter the engine.
struct DialogueInstance {
    std::string image_id;
    std::optional<FeatureVec> visual_features;
    std::vector<DialogueTurn> turns;

    void validate() const {
        if (turns.empty()) {
            throw std::invalid_argument("dialogue instance has no turns");
        }
        for (const auto & turn : turns) {
            if (turn.response.empty()) {
                throw std::invalid_argument("dialogue instance has an empty response");
            }
        }
    }
};

// Dense row-major matrix. Doubles for activations/gradients, floats for
// stored weights.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {}

    T & operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T & operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    T * row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const T * row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t count() const { return v.size(); }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

using Matrix = Mat<double>;

}  // namespace mdlm
