#include "mdlm/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdlm {

void Dims::validate() const {
    if (vocab_size < 2) {
        throw std::invalid_argument("vocab_size must be >= 2");
    }
    if (feature_dim <= 0 || d_model <= 0 || d_ff <= 0 || n_layers <= 0 || n_heads <= 0 ||
        max_len <= 0 || proj_hidden <= 0) {
        throw std::invalid_argument("all model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("d_model must be divisible by n_heads");
    }
}

template <typename T>
PredictorParamsT<T> PredictorParamsT<T>::shaped(const Dims & dims) {
    dims.validate();
    PredictorParamsT<T> p;
    p.dims = dims;
    const int d = dims.d_model;
    p.tok_emb = Mat<T>(dims.vocab_size + 1, d);
    p.pos_emb = Mat<T>(dims.max_len, d);
    p.layers.resize(dims.n_layers);
    for (auto & l : p.layers) {
        l.ln1_g = Mat<T>(1, d);
        l.ln1_b = Mat<T>(1, d);
        l.wq = Mat<T>(d, d);
        l.bq = Mat<T>(1, d);
        l.wk = Mat<T>(d, d);
        l.bk = Mat<T>(1, d);
        l.wv = Mat<T>(d, d);
        l.bv = Mat<T>(1, d);
        l.wo = Mat<T>(d, d);
        l.bo = Mat<T>(1, d);
        l.rel_bias = Mat<T>(dims.n_heads, 2 * kRelClip + 1);
        l.ln2_g = Mat<T>(1, d);
        l.ln2_b = Mat<T>(1, d);
        l.w1 = Mat<T>(d, dims.d_ff);
        l.b1 = Mat<T>(1, dims.d_ff);
        l.w2 = Mat<T>(dims.d_ff, d);
        l.b2 = Mat<T>(1, d);
    }
    p.lnf_g = Mat<T>(1, d);
    p.lnf_b = Mat<T>(1, d);
    p.head  = Mat<T>(d, dims.vocab_size);
    p.proj_w1 = Mat<T>(dims.feature_dim, dims.proj_hidden);
    p.proj_b1 = Mat<T>(1, dims.proj_hidden);
    p.proj_w2 = Mat<T>(dims.proj_hidden, d);
    p.proj_b2 = Mat<T>(1, d);
    return p;
}

template <typename T>
std::vector<TensorEntry<T>> tensor_entries(PredictorParamsT<T> & p) {
    const Dims & dm = p.dims;
    std::vector<TensorEntry<T>> e;
    auto add = [&](std::string name, WeightGroup g, Mat<T> & m, InitKind k, int fan_in) {
        e.push_back({std::move(name), g, &m, k, fan_in});
    };
    const auto bb = WeightGroup::backbone;
    add("tok_emb", bb, p.tok_emb, InitKind::uniform, dm.d_model);
    add("pos_emb", bb, p.pos_emb, InitKind::uniform, dm.d_model);
    for (size_t i = 0; i < p.layers.size(); ++i) {
        auto & l = p.layers[i];
        std::string pre = "layer" + std::to_string(i) + ".";
        add(pre + "ln1_g", bb, l.ln1_g, InitKind::ones, 0);
        add(pre + "ln1_b", bb, l.ln1_b, InitKind::zeros, 0);
        add(pre + "wq", bb, l.wq, InitKind::uniform, dm.d_model);
        add(pre + "bq", bb, l.bq, InitKind::zeros, 0);
        add(pre + "wk", bb, l.wk, InitKind::uniform, dm.d_model);
        add(pre + "bk", bb, l.bk, InitKind::zeros, 0);
        add(pre + "wv", bb, l.wv, InitKind::uniform, dm.d_model);
        add(pre + "bv", bb, l.bv, InitKind::zeros, 0);
        add(pre + "wo", bb, l.wo, InitKind::uniform, dm.d_model);
        add(pre + "bo", bb, l.bo, InitKind::zeros, 0);
        add(pre + "rel_bias", bb, l.rel_bias, InitKind::zeros, 0);
        add(pre + "ln2_g", bb, l.ln2_g, InitKind::ones, 0);
        add(pre + "ln2_b", bb, l.ln2_b, InitKind::zeros, 0);
        add(pre + "w1", bb, l.w1, InitKind::uniform, dm.d_model);
        add(pre + "b1", bb, l.b1, InitKind::zeros, 0);
        add(pre + "w2", bb, l.w2, InitKind::uniform, dm.d_ff);
        add(pre + "b2", bb, l.b2, InitKind::zeros, 0);
    }
    add("lnf_g", bb, p.lnf_g, InitKind::ones, 0);
    add("lnf_b", bb, p.lnf_b, InitKind::zeros, 0);
    add("head", bb, p.head, InitKind::uniform, dm.d_model);
    add("proj_w1", WeightGroup::projector, p.proj_w1, InitKind::uniform, dm.feature_dim);
    add("proj_b1", WeightGroup::projector, p.proj_b1, InitKind::zeros, 0);
    add("proj_w2", WeightGroup::projector, p.proj_w2, InitKind::uniform, dm.proj_hidden);
    add("proj_b2", WeightGroup::projector, p.proj_b2, InitKind::zeros, 0);
    return e;
}

template struct PredictorParamsT<float>;
template struct PredictorParamsT<double>;
template std::vector<TensorEntry<float>> tensor_entries(PredictorParamsT<float> &);
template std::vector<TensorEntry<double>> tensor_entries(PredictorParamsT<double> &);

PredictorParams init_params(uint64_t seed, const Dims & dims) {
    PredictorParams p = PredictorParams::shaped(dims);
    Pcg32 rng(seed, stream::kInit);
    for (auto & entry : tensor_entries(p)) {
        switch (entry.init) {
            case InitKind::zeros:
                entry.mat->fill(0.0f);
                break;
            case InitKind::ones:
                entry.mat->fill(1.0f);
                break;
            case InitKind::uniform: {
                double scale = 1.0 / std::sqrt(static_cast<double>(entry.fan_in));
                for (auto & w : entry.mat->v) {
                    w = static_cast<float>((2.0 * rng.next_double() - 1.0) * scale);
                }
                break;
            }
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// small dense kernels (double activations, float or double weights)

namespace {

template <typename TW>
void addmm(Matrix & c, const Matrix & a, const Mat<TW> & b) {
    // c (n x p) += a (n x m) * b (m x p)
    const int n = a.rows, m = a.cols, p = b.cols;
    for (int i = 0; i < n; ++i) {
        const double * ar = a.row(i);
        double * cr = c.row(i);
        for (int k = 0; k < m; ++k) {
            const double av = ar[k];
            if (av == 0.0) {
                continue;
            }
            const TW * br = b.row(k);
            for (int j = 0; j < p; ++j) {
                cr[j] += av * static_cast<double>(br[j]);
            }
        }
    }
}

template <typename TW>
void addmm_a_bt(Matrix & c, const Matrix & a, const Mat<TW> & b) {
    // c (n x m) += a (n x p) * b^T, b is (m x p)
    const int n = a.rows, p = a.cols, m = b.rows;
    for (int i = 0; i < n; ++i) {
        const double * ar = a.row(i);
        double * cr = c.row(i);
        for (int k = 0; k < m; ++k) {
            const TW * br = b.row(k);
            double acc = 0.0;
            for (int j = 0; j < p; ++j) {
                acc += ar[j] * static_cast<double>(br[j]);
            }
            cr[k] += acc;
        }
    }
}

void addmm_at_b(Mat<double> & w, const Matrix & a, const Matrix & d) {
    // w (m x p) += a^T * d, a is (n x m), d is (n x p)
    const int n = a.rows, m = a.cols, p = d.cols;
    for (int r = 0; r < n; ++r) {
        const double * ar = a.row(r);
        const double * dr = d.row(r);
        for (int i = 0; i < m; ++i) {
            const double av = ar[i];
            if (av == 0.0) {
                continue;
            }
            double * wr = w.row(i);
            for (int j = 0; j < p; ++j) {
                wr[j] += av * dr[j];
            }
        }
    }
}

template <typename TW>
void add_bias_rows(Matrix & x, const Mat<TW> & bias) {
    for (int i = 0; i < x.rows; ++i) {
        double * r = x.row(i);
        const TW * b = bias.row(0);
        for (int j = 0; j < x.cols; ++j) {
            r[j] += static_cast<double>(b[j]);
        }
    }
}

void add_col_sums(Mat<double> & acc, const Matrix & d) {
    for (int i = 0; i < d.rows; ++i) {
        const double * r = d.row(i);
        double * a = acc.row(0);
        for (int j = 0; j < d.cols; ++j) {
            a[j] += r[j];
        }
    }
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;  // 1/sqrt(2*pi)
    return cdf + x * pdf;
}

constexpr double kLnEps = 1e-6;

struct LnCache {
    Matrix xhat;               // normalized pre gain/bias
    std::vector<double> rstd;  // per row
};

template <typename TW>
void layernorm_fwd(const Matrix & x, const Mat<TW> & gain, const Mat<TW> & bias, Matrix & out,
                   LnCache & cache) {
    const int n = x.rows, d = x.cols;
    cache.xhat = Matrix(n, d);
    cache.rstd.assign(n, 0.0);
    out = Matrix(n, d);
    for (int i = 0; i < n; ++i) {
        const double * r = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < d; ++j) {
            mean += r[j];
        }
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double c = r[j] - mean;
            var += c * c;
        }
        var /= d;
        double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.rstd[i] = rstd;
        double * xh = cache.xhat.row(i);
        double * o = out.row(i);
        const TW * g = gain.row(0);
        const TW * b = bias.row(0);
        for (int j = 0; j < d; ++j) {
            xh[j] = (r[j] - mean) * rstd;
            o[j]  = xh[j] * static_cast<double>(g[j]) + static_cast<double>(b[j]);
        }
    }
}

template <typename TW>
void layernorm_bwd(const LnCache & cache, const Mat<TW> & gain, const Matrix & dout, Matrix & dx,
                   Mat<double> & dgain, Mat<double> & dbias) {
    const int n = dout.rows, d = dout.cols;
    for (int i = 0; i < n; ++i) {
        const double * dr = dout.row(i);
        const double * xh = cache.xhat.row(i);
        const TW * g = gain.row(0);
        double * dg = dgain.row(0);
        double * db = dbias.row(0);
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int j = 0; j < d; ++j) {
            dg[j] += dr[j] * xh[j];
            db[j] += dr[j];
            double dxh = dr[j] * static_cast<double>(g[j]);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
        }
        const double inv_d = 1.0 / d;
        double * dxr = dx.row(i);
        for (int j = 0; j < d; ++j) {
            double dxh = dr[j] * static_cast<double>(g[j]);
            dxr[j] += cache.rstd[i] * (dxh - sum_dxhat * inv_d - xh[j] * (sum_dxhat_xhat * inv_d));
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// layout

int ConversationLayout::total_len() const {
    int n = prefix_len();
    for (const auto & s : segments) {
        n += static_cast<int>(s.ids.size());
    }
    return n;
}

std::vector<int> ConversationLayout::response_rows() const {
    std::vector<int> rows;
    int pos = prefix_len();
    for (const auto & s : segments) {
        if (s.is_response) {
            for (size_t i = 0; i < s.ids.size(); ++i) {
                rows.push_back(pos + static_cast<int>(i));
            }
        }
        pos += static_cast<int>(s.ids.size());
    }
    return rows;
}

int ConversationLayout::response_len() const {
    int n = 0;
    for (const auto & s : segments) {
        if (s.is_response) {
            n += static_cast<int>(s.ids.size());
        }
    }
    return n;
}

ConversationLayout ConversationLayout::single_turn(std::optional<FeatureVec> features,
                                                   const TokenSequence & prompt,
                                                   const std::vector<TokenId> & response_ids) {
    ConversationLayout layout;
    layout.features = std::move(features);
    if (!prompt.empty()) {
        layout.segments.push_back({false, prompt.ids});
    }
    layout.segments.push_back({true, response_ids});
    return layout;
}

// ---------------------------------------------------------------------------
// forward / backward

struct ForwardCache {
    // inputs
    int n = 0;
    bool has_features = false;
    FeatureVec features;
    std::vector<TokenId> row_token;  // -1 for the prefix row
    std::vector<int> response_rows;

    // projector intermediates
    std::vector<double> proj_h1;  // pre-gelu
    std::vector<double> proj_g1;  // gelu(h1)

    Matrix x0;  // embedding output

    struct Layer {
        Matrix x_in;
        LnCache ln1;
        Matrix a;  // ln1 out
        Matrix q, k, v;
        std::vector<Matrix> att;  // per head, n x n
        Matrix head_out;          // pre-wo
        Matrix x_mid;
        LnCache ln2;
        Matrix b;   // ln2 out
        Matrix f1;  // pre-gelu
        Matrix f2;  // gelu(f1)
    };
    std::vector<Layer> layers;

    Matrix x_out;
    LnCache lnf;
    Matrix y;
};

ForwardCache * new_forward_cache() { return new ForwardCache(); }
void free_forward_cache(ForwardCache * c) { delete c; }

std::vector<double> project_visual(const FeatureVec & features, const PredictorParams & params) {
    const Dims & dm = params.dims;
    if (static_cast<int>(features.size()) != dm.feature_dim) {
        throw std::invalid_argument("feature vector has dimension " +
                                    std::to_string(features.size()) + ", expected " +
                                    std::to_string(dm.feature_dim));
    }
    std::vector<double> h1(dm.proj_hidden, 0.0);
    for (int i = 0; i < dm.feature_dim; ++i) {
        const float * wr = params.proj_w1.row(i);
        for (int j = 0; j < dm.proj_hidden; ++j) {
            h1[j] += features[i] * static_cast<double>(wr[j]);
        }
    }
    for (int j = 0; j < dm.proj_hidden; ++j) {
        h1[j] = gelu(h1[j] + static_cast<double>(params.proj_b1(0, j)));
    }
    std::vector<double> out(dm.d_model, 0.0);
    for (int i = 0; i < dm.proj_hidden; ++i) {
        const float * wr = params.proj_w2.row(i);
        for (int j = 0; j < dm.d_model; ++j) {
            out[j] += h1[i] * static_cast<double>(wr[j]);
        }
    }
    for (int j = 0; j < dm.d_model; ++j) {
        out[j] += static_cast<double>(params.proj_b2(0, j));
    }
    return out;
}

Matrix softmax_rows(const Matrix & scores, double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("softmax temperature must be positive");
    }
    Matrix probs(scores.rows, scores.cols);
    for (int i = 0; i < scores.rows; ++i) {
        const double * s = scores.row(i);
        double * p = probs.row(i);
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < scores.cols; ++j) {
            m = std::max(m, s[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < scores.cols; ++j) {
            p[j] = std::exp((s[j] - m) / temperature);
            sum += p[j];
        }
        if (!(sum > 0.0) || !std::isfinite(sum)) {
            throw std::runtime_error("softmax row has no finite mass");
        }
        for (int j = 0; j < scores.cols; ++j) {
            p[j] /= sum;
        }
    }
    return probs;
}

LogitsGrid LogitsGrid::from_scores(Matrix scores) {
    LogitsGrid g;
    g.probs  = softmax_rows(scores, 1.0);
    g.scores = std::move(scores);
    return g;
}

LogitsGrid predict_recorded(const PredictorParams & params, const ConversationLayout & layout,
                            ForwardCache & cache) {
    const Dims & dm = params.dims;
    const int n = layout.total_len();
    const int d = dm.d_model;
    const int prefix = layout.prefix_len();

    if (n == 0) {
        throw std::invalid_argument("empty input layout");
    }
    if (n > dm.max_len) {
        throw std::invalid_argument("sequence length " + std::to_string(n) +
                                    " exceeds max_len " + std::to_string(dm.max_len));
    }
    if (layout.response_len() < 1) {
        throw std::invalid_argument("layout has no response positions");
    }

    cache = ForwardCache{};
    cache.n = n;
    cache.response_rows = layout.response_rows();

    // token rows, mask allowed only inside responses
    cache.row_token.assign(n, -1);
    {
        int pos = prefix;
        for (const auto & seg : layout.segments) {
            for (TokenId id : seg.ids) {
                bool ok = seg.is_response ? (id >= 0 && id <= dm.vocab_size)
                                          : (id >= 0 && id < dm.vocab_size);
                if (!ok) {
                    throw std::invalid_argument("token id out of range in layout");
                }
                cache.row_token[pos++] = id;
            }
        }
    }

    // embeddings
    cache.x0 = Matrix(n, d);
    if (prefix == 1) {
        const FeatureVec & f = *layout.features;
        cache.has_features = true;
        cache.features = f;
        // projector with recorded intermediates
        if (static_cast<int>(f.size()) != dm.feature_dim) {
            throw std::invalid_argument("feature vector dimension mismatch");
        }
        cache.proj_h1.assign(dm.proj_hidden, 0.0);
        for (int i = 0; i < dm.feature_dim; ++i) {
            const float * wr = params.proj_w1.row(i);
            for (int j = 0; j < dm.proj_hidden; ++j) {
                cache.proj_h1[j] += f[i] * static_cast<double>(wr[j]);
            }
        }
        for (int j = 0; j < dm.proj_hidden; ++j) {
            cache.proj_h1[j] += static_cast<double>(params.proj_b1(0, j));
        }
        cache.proj_g1.assign(dm.proj_hidden, 0.0);
        for (int j = 0; j < dm.proj_hidden; ++j) {
            cache.proj_g1[j] = gelu(cache.proj_h1[j]);
        }
        double * x0r = cache.x0.row(0);
        for (int i = 0; i < dm.proj_hidden; ++i) {
            const float * wr = params.proj_w2.row(i);
            for (int j = 0; j < d; ++j) {
                x0r[j] += cache.proj_g1[i] * static_cast<double>(wr[j]);
            }
        }
        for (int j = 0; j < d; ++j) {
            x0r[j] += static_cast<double>(params.proj_b2(0, j));
        }
    }
    for (int r = prefix; r < n; ++r) {
        const float * emb = params.tok_emb.row(cache.row_token[r]);
        double * xr = cache.x0.row(r);
        for (int j = 0; j < d; ++j) {
            xr[j] = static_cast<double>(emb[j]);
        }
    }
    for (int r = 0; r < n; ++r) {
        const float * pe = params.pos_emb.row(r);
        double * xr = cache.x0.row(r);
        for (int j = 0; j < d; ++j) {
            xr[j] += static_cast<double>(pe[j]);
        }
    }

    const int dh = dm.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix x = cache.x0;
    cache.layers.resize(dm.n_layers);
    for (int li = 0; li < dm.n_layers; ++li) {
        auto & lc = cache.layers[li];
        const auto & lp = params.layers[li];
        lc.x_in = x;

        layernorm_fwd(lc.x_in, lp.ln1_g, lp.ln1_b, lc.a, lc.ln1);

        lc.q = Matrix(n, d);
        lc.k = Matrix(n, d);
        lc.v = Matrix(n, d);
        addmm(lc.q, lc.a, lp.wq);
        add_bias_rows(lc.q, lp.bq);
        addmm(lc.k, lc.a, lp.wk);
        add_bias_rows(lc.k, lp.bk);
        addmm(lc.v, lc.a, lp.wv);
        add_bias_rows(lc.v, lp.bv);

        // bidirectional attention: every position attends to every position
        lc.att.assign(dm.n_heads, Matrix());
        lc.head_out = Matrix(n, d);
        for (int h = 0; h < dm.n_heads; ++h) {
            const int off = h * dh;
            const float * rel = lp.rel_bias.row(h);
            Matrix & att = lc.att[h];
            att = Matrix(n, n);
            for (int i = 0; i < n; ++i) {
                const double * qi = lc.q.row(i) + off;
                double * ai = att.row(i);
                double m = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < n; ++j) {
                    const double * kj = lc.k.row(j) + off;
                    double s = 0.0;
                    for (int c = 0; c < dh; ++c) {
                        s += qi[c] * kj[c];
                    }
                    const int delta = std::clamp(j - i, -kRelClip, kRelClip);
                    ai[j] = s * inv_sqrt_dh + static_cast<double>(rel[delta + kRelClip]);
                    m = std::max(m, ai[j]);
                }
                double sum = 0.0;
                for (int j = 0; j < n; ++j) {
                    ai[j] = std::exp(ai[j] - m);
                    sum += ai[j];
                }
                const double inv = 1.0 / sum;
                for (int j = 0; j < n; ++j) {
                    ai[j] *= inv;
                }
                double * oi = lc.head_out.row(i) + off;
                for (int j = 0; j < n; ++j) {
                    const double aij = ai[j];
                    if (aij == 0.0) {
                        continue;
                    }
                    const double * vj = lc.v.row(j) + off;
                    for (int c = 0; c < dh; ++c) {
                        oi[c] += aij * vj[c];
                    }
                }
            }
        }

        lc.x_mid = lc.x_in;
        addmm(lc.x_mid, lc.head_out, lp.wo);
        add_bias_rows(lc.x_mid, lp.bo);

        layernorm_fwd(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.b, lc.ln2);

        lc.f1 = Matrix(n, dm.d_ff);
        addmm(lc.f1, lc.b, lp.w1);
        add_bias_rows(lc.f1, lp.b1);
        lc.f2 = Matrix(n, dm.d_ff);
        for (size_t i = 0; i < lc.f1.v.size(); ++i) {
            lc.f2.v[i] = gelu(lc.f1.v[i]);
        }

        x = lc.x_mid;
        addmm(x, lc.f2, lp.w2);
        add_bias_rows(x, lp.b2);
    }

    cache.x_out = x;
    layernorm_fwd(cache.x_out, params.lnf_g, params.lnf_b, cache.y, cache.lnf);

    const auto & rows = cache.response_rows;
    Matrix scores(static_cast<int>(rows.size()), dm.vocab_size);
    for (size_t r = 0; r < rows.size(); ++r) {
        const double * yr = cache.y.row(rows[r]);
        double * sr = scores.row(static_cast<int>(r));
        for (int c = 0; c < d; ++c) {
            const double yv = yr[c];
            const float * hr = params.head.row(c);
            for (int j = 0; j < dm.vocab_size; ++j) {
                sr[j] += yv * static_cast<double>(hr[j]);
            }
        }
    }
    for (double s : scores.v) {
        if (!std::isfinite(s)) {
            throw std::runtime_error("non-finite logits");
        }
    }
    return LogitsGrid::from_scores(std::move(scores));
}

LogitsGrid predict(const PredictorParams & params, const ConversationLayout & layout) {
    ForwardCache cache;
    return predict_recorded(params, layout, cache);
}

LogitsGrid predict(const PredictorParams & params, const std::optional<FeatureVec> & features,
                   const TokenSequence & prompt, const MaskedSequence & response) {
    return predict(params, ConversationLayout::single_turn(features, prompt, response.ids));
}

void backward(const PredictorParams & params, const ForwardCache & cache, const Matrix & dscores,
              Gradients & grads) {
    const Dims & dm = params.dims;
    if (grads.dims != dm) {
        throw std::invalid_argument("gradient structure does not match parameter dims");
    }
    const int n = cache.n;
    const int d = dm.d_model;
    const auto & rows = cache.response_rows;
    if (dscores.rows != static_cast<int>(rows.size()) || dscores.cols != dm.vocab_size) {
        throw std::invalid_argument("dscores shape does not match recorded response grid");
    }

    // head and final norm
    Matrix dy(n, d);
    for (size_t r = 0; r < rows.size(); ++r) {
        const double * ds = dscores.row(static_cast<int>(r));
        const double * yr = cache.y.row(rows[r]);
        double * dyr = dy.row(rows[r]);
        for (int c = 0; c < d; ++c) {
            const float * hr = params.head.row(c);
            double * gh = grads.head.row(c);
            double acc = 0.0;
            for (int j = 0; j < dm.vocab_size; ++j) {
                acc += ds[j] * static_cast<double>(hr[j]);
                gh[j] += yr[c] * ds[j];
            }
            dyr[c] += acc;
        }
    }

    Matrix dx(n, d);
    layernorm_bwd(cache.lnf, params.lnf_g, dy, dx, grads.lnf_g, grads.lnf_b);

    const int dh = dm.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int li = dm.n_layers - 1; li >= 0; --li) {
        const auto & lc = cache.layers[li];
        const auto & lp = params.layers[li];
        auto & lg = grads.layers[li];

        // feed-forward block: x = x_mid + gelu(ln2(x_mid) w1 + b1) w2 + b2
        Matrix df2(n, dm.d_ff);
        addmm_a_bt(df2, dx, lp.w2);  // df2 = dx * w2^T
        addmm_at_b(lg.w2, lc.f2, dx);
        add_col_sums(lg.b2, dx);

        Matrix df1(n, dm.d_ff);
        for (size_t i = 0; i < df1.v.size(); ++i) {
            df1.v[i] = df2.v[i] * gelu_grad(lc.f1.v[i]);
        }
        addmm_at_b(lg.w1, lc.b, df1);
        add_col_sums(lg.b1, df1);

        Matrix db(n, d);
        addmm_a_bt(db, df1, lp.w1);

        // dx currently holds d(loss)/d(layer output); residual passes it to
        // x_mid, plus the ln2 path contribution
        layernorm_bwd(lc.ln2, lp.ln2_g, db, dx, lg.ln2_g, lg.ln2_b);

        // attention block: x_mid = x_in + head_out wo + bo
        Matrix dhead_out(n, d);
        addmm_a_bt(dhead_out, dx, lp.wo);
        addmm_at_b(lg.wo, lc.head_out, dx);
        add_col_sums(lg.bo, dx);

        Matrix dq(n, d), dk(n, d), dv(n, d);
        std::vector<double> datt(n);
        for (int h = 0; h < dm.n_heads; ++h) {
            const int off = h * dh;
            const Matrix & att = lc.att[h];
            for (int i = 0; i < n; ++i) {
                const double * doi = dhead_out.row(i) + off;
                const double * ai = att.row(i);

                // datt and softmax backward, then accumulate into dq, dk, dv
                // datt[i][j] = do_i . v_j ; dv_j += att[i][j] * do_i
                double dot_datt_att = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double * vj = lc.v.row(j) + off;
                    double acc = 0.0;
                    for (int c = 0; c < dh; ++c) {
                        acc += doi[c] * vj[c];
                    }
                    datt[j] = acc;
                    dot_datt_att += acc * ai[j];
                    double * dvj = dv.row(j) + off;
                    const double aij = ai[j];
                    if (aij != 0.0) {
                        for (int c = 0; c < dh; ++c) {
                            dvj[c] += aij * doi[c];
                        }
                    }
                }
                const double * qi = lc.q.row(i) + off;
                double * dqi = dq.row(i) + off;
                double * drel = lg.rel_bias.row(h);
                for (int j = 0; j < n; ++j) {
                    const double ds_raw = ai[j] * (datt[j] - dot_datt_att);
                    if (ds_raw == 0.0) {
                        continue;
                    }
                    drel[std::clamp(j - i, -kRelClip, kRelClip) + kRelClip] += ds_raw;
                    const double ds = ds_raw * inv_sqrt_dh;
                    const double * kj = lc.k.row(j) + off;
                    double * dkj = dk.row(j) + off;
                    for (int c = 0; c < dh; ++c) {
                        dqi[c] += ds * kj[c];
                        dkj[c] += ds * qi[c];
                    }
                }
            }
        }

        addmm_at_b(lg.wq, lc.a, dq);
        add_col_sums(lg.bq, dq);
        addmm_at_b(lg.wk, lc.a, dk);
        add_col_sums(lg.bk, dk);
        addmm_at_b(lg.wv, lc.a, dv);
        add_col_sums(lg.bv, dv);

        Matrix da(n, d);
        addmm_a_bt(da, dq, lp.wq);
        addmm_a_bt(da, dk, lp.wk);
        addmm_a_bt(da, dv, lp.wv);

        layernorm_bwd(lc.ln1, lp.ln1_g, da, dx, lg.ln1_g, lg.ln1_b);
    }

    // embeddings and projector
    const int prefix = cache.has_features ? 1 : 0;
    for (int r = prefix; r < n; ++r) {
        const double * dxr = dx.row(r);
        double * gt = grads.tok_emb.row(cache.row_token[r]);
        for (int j = 0; j < d; ++j) {
            gt[j] += dxr[j];
        }
    }
    for (int r = 0; r < n; ++r) {
        const double * dxr = dx.row(r);
        double * gp = grads.pos_emb.row(r);
        for (int j = 0; j < d; ++j) {
            gp[j] += dxr[j];
        }
    }
    if (prefix == 1) {
        const double * dpv = dx.row(0);
        // second affine
        std::vector<double> dg1(dm.proj_hidden, 0.0);
        for (int i = 0; i < dm.proj_hidden; ++i) {
            const float * wr = params.proj_w2.row(i);
            double * gw = grads.proj_w2.row(i);
            double acc = 0.0;
            for (int j = 0; j < d; ++j) {
                acc += dpv[j] * static_cast<double>(wr[j]);
                gw[j] += cache.proj_g1[i] * dpv[j];
            }
            dg1[i] = acc;
        }
        for (int j = 0; j < d; ++j) {
            grads.proj_b2(0, j) += dpv[j];
        }
        // gelu and first affine
        for (int i = 0; i < dm.proj_hidden; ++i) {
            dg1[i] *= gelu_grad(cache.proj_h1[i]);
            grads.proj_b1(0, i) += dg1[i];
        }
        for (int i = 0; i < dm.feature_dim; ++i) {
            double * gw = grads.proj_w1.row(i);
            for (int j = 0; j < dm.proj_hidden; ++j) {
                gw[j] += cache.features[i] * dg1[j];
            }
        }
    }
}

void check_finite(const Gradients & grads) {
    auto & g = const_cast<Gradients &>(grads);
    for (const auto & entry : tensor_entries(g)) {
        for (double v : entry.mat->v) {
            if (!std::isfinite(v)) {
                throw std::runtime_error(std::string("non-finite gradient in weight group ") +
                                         weight_group_name(entry.group) + " (" + entry.name + ")");
            }
        }
    }
}

}  // namespace mdlm
