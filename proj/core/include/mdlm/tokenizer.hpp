#pragma once

#include <string>
#include <string_view>

#include "mdlm/types.hpp"

namespace mdlm {

// Byte-level tokenizer: token ids are the raw bytes of the UTF-8 encoding.
// Total on any string; detokenize(tokenize(s)) == s.
TokenSequence tokenize(std::string_view text, const Vocab & vocab);

// Inverse of tokenize. Reserved non-byte ids (eot, pad) are skipped so that
// truncated generation output renders cleanly. Throws if the sequence
// contains the mask symbol.
std::string detokenize(const TokenSequence & seq, const Vocab & vocab);

}  // namespace mdlm
