#include "mdlm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

#include "mdlm/sampler.hpp"
#include "mdlm/tokenizer.hpp"

namespace mdlm {

double repetition_rate(const TokenSequence & seq) {
    if (seq.empty()) {
        throw std::invalid_argument("repetition_rate needs a non-empty sequence");
    }
    if (seq.size() == 1) {
        return 0.0;
    }
    size_t repeats = 0;
    for (size_t i = 1; i < seq.size(); ++i) {
        if (seq.ids[i] == seq.ids[i - 1]) {
            repeats++;
        }
    }
    return static_cast<double>(repeats) / static_cast<double>(seq.size() - 1);
}

double token_recall(const TokenSequence & truth, const TokenSequence & generated) {
    if (truth.empty()) {
        throw std::invalid_argument("token_recall needs a non-empty truth sequence");
    }
    std::set<TokenId> truth_set(truth.ids.begin(), truth.ids.end());
    std::set<TokenId> gen_set(generated.ids.begin(), generated.ids.end());
    size_t hit = 0;
    for (TokenId id : truth_set) {
        if (gen_set.count(id)) {
            hit++;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(truth_set.size());
}

std::string normalize_answer(const std::string & text) {
    size_t lo = 0;
    size_t hi = text.size();
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto is_punct = [](unsigned char c) {
        return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
    };
    while (lo < hi && is_space(static_cast<unsigned char>(text[lo]))) {
        lo++;
    }
    while (hi > lo && (is_space(static_cast<unsigned char>(text[hi - 1])) ||
                       is_punct(static_cast<unsigned char>(text[hi - 1])))) {
        hi--;
    }
    std::string out;
    out.reserve(hi - lo);
    for (size_t i = lo; i < hi; ++i) {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
    }
    return out;
}

int closed_accuracy(const std::string & truth, const TokenSequence & generated,
                    const Vocab & vocab) {
    TokenSequence cut = truncate_at_eot(generated, vocab);
    return normalize_answer(detokenize(cut, vocab)) == truth ? 1 : 0;
}

TimingStats timing_stats(const std::vector<GenerationTrace> & traces) {
    if (traces.empty()) {
        throw std::invalid_argument("timing_stats needs at least one trace");
    }
    TimingStats st;
    for (const auto & tr : traces) {
        st.t_per_query += tr.total_seconds;
        st.w_per_query += static_cast<double>(tr.emitted_tokens);
    }
    st.t_per_query /= static_cast<double>(traces.size());
    st.w_per_query /= static_cast<double>(traces.size());
    st.t_per_word = st.w_per_query > 0.0 ? st.t_per_query / st.w_per_query : 0.0;
    return st;
}

}  // namespace mdlm
