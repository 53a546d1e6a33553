#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <map>

#include "mdlm/diffusion.hpp"
#include "support/oracles.hpp"

using namespace mdlm;
using namespace mdlm::testing;

namespace {

Vocab tiny_vocab(int size) {
    Vocab v;
    v.size = size;
    return v;
}

}  // namespace

TEST_CASE("forward_mask boundaries") {
    Vocab v = tiny_vocab(5);
    TokenSequence x0{{0, 1, 2, 3}};
    Pcg32 rng(1, 2);

    MaskedSequence all = forward_mask(x0, 1.0, v, rng);
    for (TokenId id : all.ids) {
        CHECK(id == v.mask_id());
    }
    CHECK(all.t == 1.0);

    MaskedSequence none = forward_mask(x0, 0.0, v, rng);
    CHECK(none.ids == x0.ids);

    CHECK_THROWS_AS(forward_mask(x0, 1.5, v, rng), std::invalid_argument);

    TokenSequence bad{{0, v.mask_id()}};
    CHECK_THROWS_AS(forward_mask(bad, 0.5, v, rng), std::invalid_argument);
}

TEST_CASE("forward_mask near t=0 is statistically the identity") {
    Vocab v = tiny_vocab(5);
    TokenSequence x0{{0, 1, 2, 3}};
    Pcg32 rng(7, 3);
    int masked = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        masked += static_cast<int>(forward_mask(x0, kNoiseFloor, v, rng).mask_count(v.mask_id()));
    }
    // expectation 4 * 1e-3 * draws = 80
    CHECK(masked < 200);
}

TEST_CASE("forward_mask mask counts follow the exact binomial") {
    Vocab v = tiny_vocab(4);
    TokenSequence x0{{0, 1, 2, 3}};
    Pcg32 rng(2026, 4);
    const int draws = 100000;
    std::array<int, 5> hist{};
    for (int i = 0; i < draws; ++i) {
        hist[forward_mask(x0, 0.5, v, rng).mask_count(v.mask_id())]++;
    }
    // exact pmf by enumeration: C(4,k) / 16
    const double pmf[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    double stat = 0.0;
    for (int k = 0; k <= 4; ++k) {
        const double expd = pmf[k] * draws;
        stat += (hist[k] - expd) * (hist[k] - expd) / expd;
    }
    CHECK(chi_square_pvalue(stat, 4) > 0.001);
}

TEST_CASE("forward marginal P(masked) = t and independence across positions") {
    Vocab v = tiny_vocab(3);
    const int len = 8;
    TokenSequence x0;
    for (int i = 0; i < len; ++i) {
        x0.ids.push_back(i % 3);
    }
    const int draws = 100000;
    for (double t : {0.1, 0.3, 0.7}) {
        Pcg32 rng(55, static_cast<uint64_t>(t * 1000));
        std::vector<int> count(len, 0);
        std::vector<std::vector<int>> joint(len, std::vector<int>(len, 0));
        for (int d = 0; d < draws; ++d) {
            MaskedSequence xt = forward_mask(x0, t, v, rng);
            for (int i = 0; i < len; ++i) {
                if (xt.ids[i] == v.mask_id()) {
                    count[i]++;
                    for (int j = i + 1; j < len; ++j) {
                        if (xt.ids[j] == v.mask_id()) {
                            joint[i][j]++;
                        }
                    }
                }
            }
        }
        for (int i = 0; i < len; ++i) {
            const double p = static_cast<double>(count[i]) / draws;
            CHECK(std::abs(p - t) < 0.005);
        }
        for (int i = 0; i < len; ++i) {
            for (int j = i + 1; j < len; ++j) {
                const double pi = static_cast<double>(count[i]) / draws;
                const double pj = static_cast<double>(count[j]) / draws;
                const double pij = static_cast<double>(joint[i][j]) / draws;
                const double corr =
                    (pij - pi * pj) / std::sqrt(pi * (1 - pi) * pj * (1 - pj));
                CHECK(std::abs(corr) < 0.01);
            }
        }
    }
}

TEST_CASE("sample_training_noise distribution") {
    Pcg32 rng(11, 5);
    const int draws = 1000000;
    std::vector<double> samples;
    samples.reserve(draws);
    double sum = 0.0;
    double mn = 1.0;
    for (int i = 0; i < draws; ++i) {
        double t = sample_training_noise(rng).t;
        samples.push_back(t);
        sum += t;
        mn = std::min(mn, t);
    }
    const double mean = sum / draws;
    CHECK(mean > 0.4985);
    CHECK(mean < 0.5015);
    CHECK(mn >= kNoiseFloor);
    const double ks = ks_statistic(std::move(samples), [](double x) {
        return (x - kNoiseFloor) / (1.0 - kNoiseFloor);
    });
    CHECK(ks < 0.002);
}

TEST_CASE("reverse_transition_exact point cases") {
    Vocab v = tiny_vocab(2);

    SUBCASE("no masked positions -> point mass") {
        MaskedSequence xt{{0, 1}, 0.8};
        auto dist = reverse_transition_exact(xt, 0.8, 0.2,
                                             {{0.5, 0.5}, {0.5, 0.5}}, v);
        REQUIRE(dist.size() == 1);
        CHECK(dist[0].seq.ids == std::vector<TokenId>{0, 1});
        CHECK(dist[0].prob == doctest::Approx(1.0));
    }

    SUBCASE("s just below t keeps masks with probability near 1") {
        MaskedSequence xt{{v.mask_id()}, 1.0};
        const double delta = 1e-9;
        auto dist = reverse_transition_exact(xt, 1.0, 1.0 - delta, {{0.7, 0.3}}, v);
        double p_mask = 0.0;
        for (const auto & m : dist) {
            if (m.seq.ids[0] == v.mask_id()) {
                p_mask = m.prob;
            }
        }
        CHECK(p_mask == doctest::Approx(1.0).epsilon(1e-8));
    }

    SUBCASE("hand-evaluated single position kernel") {
        MaskedSequence xt{{v.mask_id()}, 1.0};
        auto dist = reverse_transition_exact(xt, 1.0, 0.5, {{0.7, 0.3}}, v);
        std::map<std::vector<TokenId>, double> probs;
        for (const auto & m : dist) {
            probs[m.seq.ids] = m.prob;
        }
        CHECK(probs[{v.mask_id()}] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(probs[{0}] == doctest::Approx(0.35).epsilon(1e-12));
        CHECK(probs[{1}] == doctest::Approx(0.15).epsilon(1e-12));

        // cross-check by monte carlo sampling of the same kernel
        Pcg32 rng(101, 6);
        int n_mask = 0, n_zero = 0, n_one = 0;
        const int draws = 1000000;
        for (int i = 0; i < draws; ++i) {
            double u = rng.next_double();
            if (u < 0.5) {
                n_mask++;
            } else if (u < 0.5 + 0.5 * 0.7) {
                n_zero++;
            } else {
                n_one++;
            }
        }
        CHECK(std::abs(n_mask / double(draws) - 0.5) < 0.0016 * 3);
        CHECK(std::abs(n_zero / double(draws) - 0.35) < 0.0015 * 3);
        CHECK(std::abs(n_one / double(draws) - 0.15) < 0.0011 * 3);
    }

    SUBCASE("marginals sum to one") {
        MaskedSequence xt{{v.mask_id(), 0, v.mask_id()}, 0.9};
        auto dist = reverse_transition_exact(xt, 0.9, 0.3,
                                             {{0.2, 0.8}, {1.0, 0.0}, {0.6, 0.4}}, v);
        double total = 0.0;
        for (const auto & m : dist) {
            total += m.prob;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("argument validation") {
        MaskedSequence xt{{v.mask_id()}, 1.0};
        CHECK_THROWS_AS(reverse_transition_exact(xt, 0.5, 0.5, {{0.5, 0.5}}, v),
                        std::invalid_argument);
        CHECK_THROWS_AS(reverse_transition_exact(xt, 0.5, 0.7, {{0.5, 0.5}}, v),
                        std::invalid_argument);
        CHECK_THROWS_AS(reverse_transition_exact(xt, 1.0, 0.5, {{0.5, 0.6}}, v),
                        std::invalid_argument);
    }
}

TEST_CASE("full-chain composition recovers a product data distribution exactly") {
    // Two equal-mass sequences differing in exactly one position form a
    // product distribution, the regime where the per-position posterior
    // factorizes and the enumerated chain is exact for any grid.
    Vocab v = tiny_vocab(2);
    TinyDataset data({{0, 0}, {0, 1}}, {0.5, 0.5});

    for (const auto & grid : std::vector<std::vector<double>>{
             {1.0, 0.0},
             {1.0, 0.5, 0.0},
             {1.0, 0.75, 0.5, 0.25, 0.0},
             {1.0, 0.9, 0.2, 0.0},
         }) {
        auto out = enumerate_chain(data, v, grid);
        REQUIRE(out.size() == 2);
        CHECK(out[{0, 0}] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(out[{0, 1}] == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("loss_unconditional hand cases") {
    Vocab v = tiny_vocab(4);

    SUBCASE("no masked positions -> 0") {
        TokenSequence x0{{1, 2}};
        MaskedSequence xt{{1, 2}, 0.5};
        Matrix probs(2, 4);
        probs.fill(0.25);
        CHECK(loss_unconditional(x0, xt, probs, v) == 0.0);
    }

    SUBCASE("single masked position, t=0.5, p=0.25") {
        TokenSequence x0{{3}};
        MaskedSequence xt{{v.mask_id()}, 0.5};
        Matrix probs(1, 4);
        probs.fill(0.25);
        CHECK(loss_unconditional(x0, xt, probs, v) ==
              doctest::Approx(2.7725887222397812).epsilon(1e-12));
    }

    SUBCASE("perfect prediction -> 0") {
        TokenSequence x0{{0, 1, 2}};
        MaskedSequence xt{{v.mask_id(), v.mask_id(), v.mask_id()}, 0.7};
        Matrix probs(3, 4);
        for (int i = 0; i < 3; ++i) {
            probs(i, x0.ids[i]) = 1.0;
        }
        CHECK(loss_unconditional(x0, xt, probs, v) == 0.0);
    }

    SUBCASE("zero likelihood errors") {
        TokenSequence x0{{0}};
        MaskedSequence xt{{v.mask_id()}, 0.5};
        Matrix probs(1, 4);
        CHECK_THROWS_AS(loss_unconditional(x0, xt, probs, v), std::invalid_argument);
    }

    SUBCASE("tiny probabilities are clamped, not fatal") {
        TokenSequence x0{{0}};
        MaskedSequence xt{{v.mask_id()}, 1.0};
        Matrix probs(1, 4);
        probs(0, 0) = 1e-30;
        CHECK(loss_unconditional(x0, xt, probs, v) ==
              doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
    }
}

TEST_CASE("loss_conditional hand cases") {
    Vocab v = tiny_vocab(8);

    SUBCASE("fully unmasked response -> 0") {
        TokenSequence r0{{1, 2, 3}};
        MaskedSequence rt{{1, 2, 3}, 0.25};
        Matrix probs(3, 8);
        probs.fill(0.125);
        CHECK(loss_conditional(r0, rt, probs, v) == 0.0);
    }

    SUBCASE("two masked tokens, t=0.25, probs 0.5 and 0.2") {
        TokenSequence r0{{4, 5}};
        MaskedSequence rt{{v.mask_id(), v.mask_id()}, 0.25};
        Matrix probs(2, 8);
        probs(0, 4) = 0.5;
        probs(1, 5) = 0.2;
        CHECK(loss_conditional(r0, rt, probs, v) ==
              doctest::Approx(9.2103403719761836).epsilon(1e-12));
    }

    SUBCASE("reduces to the unconditional loss with empty prompt") {
        DialogueInstance inst;
        inst.turns.push_back({TokenSequence{}, TokenSequence{{4, 5}}});
        MaskedSequence rt{{v.mask_id(), 5}, 0.5};
        Matrix probs(2, 8);
        probs.fill(0.125);
        TokenSequence r0{{4, 5}};
        CHECK(loss_conditional(inst, rt, probs, v) == loss_unconditional(r0, rt, probs, v));
    }

    SUBCASE("prompt rows of a full-layout grid are never read") {
        TokenSequence r0{{4, 5}};
        MaskedSequence rt{{v.mask_id(), v.mask_id()}, 0.25};
        // full layout: 3 prompt rows followed by 2 response rows
        Matrix grid(5, 8);
        grid.fill(0.125);
        grid(3, 4) = 0.5;
        grid(4, 5) = 0.2;
        const double a = loss_conditional(r0, rt, grid, v, 3);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 8; ++c) {
                grid(r, c) = 1e9 + r * c;  // garbage in prompt rows
            }
        }
        const double b = loss_conditional(r0, rt, grid, v, 3);
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);  // bitwise
    }
}
