#include "mdlm/tokenizer.hpp"

#include <stdexcept>

namespace mdlm {

TokenSequence tokenize(std::string_view text, const Vocab & vocab) {
    if (vocab.size < 257) {
        throw std::invalid_argument("byte-level tokenizer needs vocab.size >= 257");
    }
    TokenSequence out;
    out.ids.reserve(text.size());
    for (unsigned char c : text) {
        out.ids.push_back(static_cast<TokenId>(c));
    }
    return out;
}

std::string detokenize(const TokenSequence & seq, const Vocab & vocab) {
    std::string out;
    out.reserve(seq.size());
    for (TokenId id : seq.ids) {
        if (id == vocab.mask_id()) {
            throw std::invalid_argument("masked sequence not detokenizable");
        }
        if (id < 0 || id > vocab.mask_id()) {
            throw std::invalid_argument("token id out of range: " + std::to_string(id));
        }
        if (id < 256) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        }
        // reserved non-byte ids (eot, pad) render as nothing
    }
    return out;
}

}  // namespace mdlm
