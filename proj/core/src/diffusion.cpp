#include "mdlm/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mdlm {

NoiseSample sample_training_noise(Pcg32 & rng) {
    // u in (0, 1] mapped onto (floor, 1]
    double u = rng.next_double_open_left();
    return NoiseSample{kNoiseFloor + (1.0 - kNoiseFloor) * u};
}

MaskedSequence forward_mask(const TokenSequence & x0, double t, const Vocab & vocab, Pcg32 & rng) {
    if (t < 0.0 || t > 1.0) {
        throw std::invalid_argument("noise level t must be in [0, 1]");
    }
    const TokenId mask = vocab.mask_id();
    for (TokenId id : x0.ids) {
        if (!vocab.is_real(id)) {
            throw std::invalid_argument("clean sequence contains a non-vocabulary id");
        }
    }
    MaskedSequence out;
    out.t = t;
    out.ids.reserve(x0.size());
    for (TokenId id : x0.ids) {
        out.ids.push_back(rng.next_double() < t ? mask : id);
    }
    return out;
}

std::vector<SequenceMass> reverse_transition_exact(const MaskedSequence & xt, double t, double s,
                                                   const std::vector<std::vector<double>> & conditional,
                                                   const Vocab & vocab) {
    if (!(s >= 0.0 && s < t && t <= 1.0)) {
        throw std::invalid_argument("reverse transition requires 0 <= s < t <= 1");
    }
    const TokenId mask = vocab.mask_id();
    const size_t n = xt.size();
    if (conditional.size() != n) {
        throw std::invalid_argument("conditional must supply one distribution per position");
    }
    for (size_t i = 0; i < n; ++i) {
        if (xt.ids[i] != mask) {
            continue;
        }
        if (conditional[i].size() != static_cast<size_t>(vocab.size)) {
            throw std::invalid_argument("conditional distribution has wrong support size");
        }
        double sum = 0.0;
        for (double p : conditional[i]) {
            if (p < 0.0) {
                throw std::invalid_argument("conditional distribution has negative mass");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw std::invalid_argument("conditional distribution not normalized at position " +
                                        std::to_string(i));
        }
    }

    const double keep_mask = s / t;

    // product expansion, one position at a time
    std::vector<SequenceMass> states;
    states.push_back({MaskedSequence{{}, s}, 1.0});
    for (size_t i = 0; i < n; ++i) {
        std::vector<SequenceMass> next;
        if (xt.ids[i] != mask) {
            next.reserve(states.size());
            for (auto & st : states) {
                SequenceMass m = st;
                m.seq.ids.push_back(xt.ids[i]);
                next.push_back(std::move(m));
            }
        } else {
            next.reserve(states.size() * (vocab.size + 1));
            for (auto & st : states) {
                if (keep_mask > 0.0) {
                    SequenceMass m = st;
                    m.seq.ids.push_back(mask);
                    m.prob *= keep_mask;
                    next.push_back(std::move(m));
                }
                for (TokenId v = 0; v < vocab.size; ++v) {
                    double p = (1.0 - keep_mask) * conditional[i][v];
                    if (p == 0.0) {
                        continue;
                    }
                    SequenceMass m = st;
                    m.seq.ids.push_back(v);
                    m.prob *= p;
                    next.push_back(std::move(m));
                }
            }
        }
        states = std::move(next);
    }
    return states;
}

namespace {

double masked_nll(const std::vector<TokenId> & clean, const MaskedSequence & noisy,
                  const Matrix & probs, const Vocab & vocab, int row_offset,
                  const char * what) {
    if (clean.size() != noisy.size()) {
        throw std::invalid_argument(std::string(what) + ": clean/masked length mismatch");
    }
    if (!(noisy.t > 0.0)) {
        throw std::invalid_argument(std::string(what) + ": noise level must be positive");
    }
    if (row_offset < 0 ||
        static_cast<size_t>(row_offset) + clean.size() > static_cast<size_t>(probs.rows)) {
        throw std::invalid_argument(std::string(what) + ": probability grid too small");
    }
    if (probs.cols != vocab.size) {
        throw std::invalid_argument(std::string(what) + ": probability grid has wrong vocab width");
    }
    const TokenId mask = vocab.mask_id();
    double nll = 0.0;
    for (size_t i = 0; i < clean.size(); ++i) {
        if (noisy.ids[i] != mask) {
            continue;
        }
        double p = probs(row_offset + static_cast<int>(i), clean[i]);
        if (p <= 0.0) {
            throw std::invalid_argument(std::string(what) + ": zero likelihood at masked position " +
                                        std::to_string(i));
        }
        nll -= std::log(std::max(p, kProbFloor));
    }
    return nll / noisy.t;
}

}  // namespace

double loss_unconditional(const TokenSequence & x0, const MaskedSequence & xt, const Matrix & probs,
                          const Vocab & vocab) {
    return masked_nll(x0.ids, xt, probs, vocab, 0, "loss_unconditional");
}

double loss_conditional(const TokenSequence & r0, const MaskedSequence & rt, const Matrix & probs,
                        const Vocab & vocab, int response_row_offset) {
    return masked_nll(r0.ids, rt, probs, vocab, response_row_offset, "loss_conditional");
}

double loss_conditional(const DialogueInstance & instance, const MaskedSequence & rt,
                        const Matrix & probs, const Vocab & vocab, int response_row_offset) {
    TokenSequence r0;
    for (const auto & turn : instance.turns) {
        r0.ids.insert(r0.ids.end(), turn.response.ids.begin(), turn.response.ids.end());
    }
    return loss_conditional(r0, rt, probs, vocab, response_row_offset);
}

}  // namespace mdlm
