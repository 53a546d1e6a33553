#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mdlm/types.hpp"

namespace mdlm {

// Deterministic stand-in for a frozen vision tower: a unit-norm vector
// seeded by the 64-bit FNV-1a hash of the id bytes, so the same id maps to
// the same vector on every platform, forever.
FeatureVec synthetic_feature_provider(const std::string & image_id, int feature_dim);

// Sidecar file mapping image ids to D-dimensional feature vectors, one
// record per line: `id<TAB>v1 v2 ... vD`. D is fixed per file.
struct FeatureTable {
    int dim = 0;
    std::unordered_map<std::string, FeatureVec> rows;

    static FeatureTable load(const std::string & path);
    void save(const std::string & path) const;
};

// Dialogue corpus: UTF-8 text, one record per line,
//   image_id<TAB>prompt<TAB>response[<TAB>prompt<TAB>response ...]
// Raw tabs/newlines/backslashes inside fields are escaped as \t, \n, \\.
enum class CorpusMode {
    dialogue,   // prompts kept
    alignment,  // prompts dropped: responses condition on features alone
};

// Loads a dialogue corpus and attaches features: ids present in `table`
// use its vectors, absent ids fall back to the synthetic provider at
// `feature_dim`. A table whose dimension differs from `feature_dim` is an
// error; malformed lines report their line number.
std::vector<DialogueInstance> load_dialogue_corpus(const std::string & path, CorpusMode mode,
                                                   const Vocab & vocab,
                                                   const FeatureTable * table, int feature_dim);

// Plain corpus: one training sequence per line, raw text.
std::vector<TokenSequence> load_plain_corpus(const std::string & path, const Vocab & vocab);

// Writes instances in the dialogue format above (prompt/response text is
// recovered through the byte tokenizer).
void save_dialogue_corpus(const std::string & path,
                          const std::vector<DialogueInstance> & instances, const Vocab & vocab);

std::string escape_field(const std::string & raw);
std::string unescape_field(const std::string & escaped);

}  // namespace mdlm
