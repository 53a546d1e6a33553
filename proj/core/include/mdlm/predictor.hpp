#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdlm/rng.hpp"
#include "mdlm/types.hpp"

namespace mdlm {

// Model dimensions. proj_hidden is the projector's hidden width; the
// visual prefix length is fixed to one projected embedding.
struct Dims {
    int vocab_size  = 258;  // V; the mask symbol is vocab_size itself
    int feature_dim = 16;   // D
    int d_model     = 64;
    int d_ff        = 256;
    int n_layers    = 2;
    int n_heads     = 4;
    int max_len     = 128;
    int proj_hidden = 64;

    int head_dim() const { return d_model / n_heads; }

    void validate() const;

    bool operator==(const Dims & other) const = default;

    // Small enough to train in minutes on one CPU while exercising every
    // code path.
    static Dims desk_default() { return Dims{}; }
};

// attention scores carry a learned per-head relative-position bias,
// clipped at this offset; byte-level neighbor rules are hard to pick up
// from absolute positions alone at this scale
inline constexpr int kRelClip = 16;

template <typename T>
struct LayerParamsT {
    Mat<T> ln1_g, ln1_b;
    Mat<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<T> rel_bias;  // n_heads x (2*kRelClip+1), offset j-i clipped
    Mat<T> ln2_g, ln2_b;
    Mat<T> w1, b1, w2, b2;
};

// All weights of the mask predictor: bidirectional transformer backbone,
// output head over the real vocabulary (the mask symbol has an input
// embedding but is never a prediction target), and the two-layer GELU
// projector mapping visual features into the embedding space.
template <typename T>
struct PredictorParamsT {
    Dims dims;

    Mat<T> tok_emb;  // (V+1) x d, row V is the mask embedding
    Mat<T> pos_emb;  // max_len x d
    std::vector<LayerParamsT<T>> layers;
    Mat<T> lnf_g, lnf_b;
    Mat<T> head;  // d x V

    Mat<T> proj_w1, proj_b1;  // D x proj_hidden
    Mat<T> proj_w2, proj_b2;  // proj_hidden x d

    static PredictorParamsT shaped(const Dims & dims);
};

using PredictorParams = PredictorParamsT<float>;
using Gradients       = PredictorParamsT<double>;

enum class WeightGroup {
    projector,
    backbone,
};

inline const char * weight_group_name(WeightGroup g) {
    return g == WeightGroup::projector ? "projector" : "backbone";
}

enum class InitKind {
    zeros,    // biases
    ones,     // layer norm gains
    uniform,  // +-1/sqrt(fan_in)
};

template <typename T>
struct TensorEntry {
    std::string name;
    WeightGroup group;
    Mat<T> * mat;
    InitKind init = InitKind::uniform;
    int fan_in    = 0;
};

// Every tensor of the model in a fixed, documented order. This order is
// the single source of truth for initialization, the optimizer, and the
// checkpoint payload.
template <typename T>
std::vector<TensorEntry<T>> tensor_entries(PredictorParamsT<T> & params);

// Deterministic scaled-uniform initialization: each weight matrix is drawn
// uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)] where fan_in is the
// tensor's input width; biases start at zero and layer norm gains at one.
PredictorParams init_params(uint64_t seed, const Dims & dims);

// Per-position scores over the real vocabulary and their stable-softmax
// probabilities.
struct LogitsGrid {
    Matrix scores;  // rows = response positions, cols = V
    Matrix probs;

    static LogitsGrid from_scores(Matrix scores);
};

// Stable row softmax, optionally with a temperature divisor on the scores.
Matrix softmax_rows(const Matrix & scores, double temperature = 1.0);

struct Segment {
    bool is_response = false;
    std::vector<TokenId> ids;  // response segments may contain the mask id
};

// Input layout: [visual prefix?][segment tokens...] with text positions
// shifted by the prefix length. Response rows are reported in order.
struct ConversationLayout {
    std::optional<FeatureVec> features;
    std::vector<Segment> segments;

    int prefix_len() const { return features.has_value() ? 1 : 0; }
    int total_len() const;
    std::vector<int> response_rows() const;
    int response_len() const;

    static ConversationLayout single_turn(std::optional<FeatureVec> features,
                                          const TokenSequence & prompt,
                                          const std::vector<TokenId> & response_ids);
};

// Projector forward: affine -> GELU -> affine, producing the single prefix
// embedding (length d_model). Positional encoding is added later by the
// sequence forward pass.
std::vector<double> project_visual(const FeatureVec & features, const PredictorParams & params);

struct ForwardCache;  // activations recorded for backward; defined in predictor.cpp

// Full bidirectional forward pass; returns scores for every response
// position. Deterministic given (inputs, params).
LogitsGrid predict(const PredictorParams & params, const ConversationLayout & layout);

// Single-turn convenience matching the training objective's conditional.
LogitsGrid predict(const PredictorParams & params, const std::optional<FeatureVec> & features,
                   const TokenSequence & prompt, const MaskedSequence & response);

// Forward pass that records activations. The cache stays valid as long as
// params is unchanged.
LogitsGrid predict_recorded(const PredictorParams & params, const ConversationLayout & layout,
                            ForwardCache & cache);

ForwardCache * new_forward_cache();
void free_forward_cache(ForwardCache *);

// RAII holder for the opaque cache.
class ForwardCacheHandle {
  public:
    ForwardCacheHandle() : cache_(new_forward_cache()) {}
    ~ForwardCacheHandle() { free_forward_cache(cache_); }
    ForwardCacheHandle(const ForwardCacheHandle &) = delete;
    ForwardCacheHandle & operator=(const ForwardCacheHandle &) = delete;
    ForwardCache & get() { return *cache_; }

  private:
    ForwardCache * cache_;
};

// Accumulates d(loss)/d(weights) into `grads` given d(loss)/d(scores) for
// every response row of the recorded forward pass. Gradients of a sum of
// instances are the sum of per-instance gradients.
void backward(const PredictorParams & params, const ForwardCache & cache, const Matrix & dscores,
              Gradients & grads);

// Throws naming the first weight group with a non-finite gradient.
void check_finite(const Gradients & grads);

// Predictor abstraction used by the sampler, so generation can run against
// the transformer or against exact test oracles.
class MaskPredictor {
  public:
    virtual ~MaskPredictor() = default;
    virtual LogitsGrid predict_response(const std::optional<FeatureVec> & features,
                                        const TokenSequence & prompt,
                                        const MaskedSequence & response) const = 0;
};

class TransformerPredictor final : public MaskPredictor {
  public:
    explicit TransformerPredictor(const PredictorParams & params) : params_(&params) {}

    LogitsGrid predict_response(const std::optional<FeatureVec> & features,
                                const TokenSequence & prompt,
                                const MaskedSequence & response) const override {
        return predict(*params_, features, prompt, response);
    }

  private:
    const PredictorParams * params_;
};

}  // namespace mdlm
