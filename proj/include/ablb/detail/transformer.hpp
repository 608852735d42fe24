#pragma once

// Templated forward/backward for the pre-norm decoder. Instantiated with
// float for normal operation and double for gradient checking.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ablb/model.hpp"

namespace ablb::detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using CMap = Eigen::Map<const Mat<T>>;
template <typename T>
using MMap = Eigen::Map<Mat<T>>;
template <typename T>
using CRow = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using MRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct NormCache {
    Mat<T> xhat;
    ColVec<T> rstd;
};

template <typename T>
struct LayerCache {
    Mat<T> x_in;
    NormCache<T> ln1;
    Mat<T> h1;
    std::vector<Mat<T>> q, k, v, a, o;
    Mat<T> x_mid;
    NormCache<T> ln2;
    Mat<T> h2;
    Mat<T> u;
    Mat<T> g;
};

template <typename T>
struct Cache {
    std::size_t n = 0;
    std::vector<TokenId> tokens;
    std::vector<LayerCache<T>> layers;
    Mat<T> x_final;
    NormCache<T> lnf;
    Mat<T> hf;
    Mat<T> logits;
};

/// Which parameter gradients a backward pass must produce. Without `all`,
/// only the query/key projections of `head` are filled and the pass stops at
/// that head's layer.
struct GradRequest {
    bool all = true;
    HeadId head{};
    bool query = true;
    bool key = true;
};

template <typename T>
CMap<T> cmat(std::span<const T> p, std::size_t off, std::size_t rows, std::size_t cols) {
    return CMap<T>(p.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MMap<T> mmat(std::span<T> p, std::size_t off, std::size_t rows, std::size_t cols) {
    return MMap<T>(p.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
CRow<T> crow(std::span<const T> p, std::size_t off, std::size_t cols) {
    return CRow<T>(p.data() + off, static_cast<Eigen::Index>(cols));
}

template <typename T>
MRow<T> mrow(std::span<T> p, std::size_t off, std::size_t cols) {
    return MRow<T>(p.data() + off, static_cast<Eigen::Index>(cols));
}

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const CRow<T>& gain, const CRow<T>& bias, NormCache<T>& cache) {
    const auto dim = static_cast<T>(x.cols());
    ColVec<T> mean = x.rowwise().sum() / dim;
    Mat<T> centered = x.colwise() - mean;
    ColVec<T> var = centered.array().square().rowwise().sum() / dim;
    cache.rstd = (var.array() + static_cast<T>(kLayerNormEps)).rsqrt();
    cache.xhat = centered.array().colwise() * cache.rstd.array();
    Mat<T> y = (cache.xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
    return y;
}

// Returns dx; accumulates gain/bias gradients when pointers are given.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const CRow<T>& gain, const NormCache<T>& cache, MRow<T>* dgain,
                           MRow<T>* dbias) {
    if (dgain != nullptr) {
        *dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    }
    if (dbias != nullptr) {
        *dbias += dy.colwise().sum();
    }
    const auto dim = static_cast<T>(dy.cols());
    Mat<T> dxhat = dy.array().rowwise() * gain.array();
    ColVec<T> mean_d = dxhat.rowwise().sum() / dim;
    ColVec<T> mean_dx = (dxhat.array() * cache.xhat.array()).rowwise().sum() / dim;
    Mat<T> dx = dxhat.colwise() - mean_d;
    dx -= (cache.xhat.array().colwise() * mean_dx.array()).matrix();
    dx = dx.array().colwise() * cache.rstd.array();
    return dx;
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

template <typename T>
T gelu(T x) {
    const T t = std::tanh(static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x));
    return static_cast<T>(0.5) * x * (static_cast<T>(1) + t);
}

template <typename T>
T gelu_grad(T x) {
    const T inner = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
    const T t = std::tanh(inner);
    const T dinner = static_cast<T>(kGeluC) * (static_cast<T>(1) + static_cast<T>(3 * kGeluA) * x * x);
    return static_cast<T>(0.5) * (static_cast<T>(1) + t) +
           static_cast<T>(0.5) * x * (static_cast<T>(1) - t * t) * dinner;
}

template <typename T>
Cache<T> forward(const ParamLayout& layout, std::span<const T> p, std::span<const TokenId> tokens) {
    const ModelConfig& cfg = layout.config();
    const std::size_t n = tokens.size();
    const std::size_t dim = cfg.model_dim;
    const std::size_t dh = cfg.head_dim();
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    Cache<T> c;
    c.n = n;
    c.tokens.assign(tokens.begin(), tokens.end());

    auto tok = cmat(p, layout.tok_emb(), cfg.vocab_size, dim);
    auto pos = cmat(p, layout.pos_emb(), cfg.max_seq_len, dim);
    Mat<T> x(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        x.row(i) = tok.row(tokens[i]) + pos.row(i);
    }

    c.layers.resize(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const auto& L = layout.layer(l);
        LayerCache<T>& lc = c.layers[l];
        lc.x_in = x;
        lc.h1 = layer_norm<T>(x, crow(p, L.ln1_gain, dim), crow(p, L.ln1_bias, dim), lc.ln1);

        Mat<T> attn_out = Mat<T>::Zero(n, dim);
        lc.q.resize(cfg.num_heads);
        lc.k.resize(cfg.num_heads);
        lc.v.resize(cfg.num_heads);
        lc.a.resize(cfg.num_heads);
        lc.o.resize(cfg.num_heads);
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            lc.q[h] = lc.h1 * cmat(p, L.wq[h], dim, dh);
            lc.k[h] = lc.h1 * cmat(p, L.wk[h], dim, dh);
            lc.v[h] = lc.h1 * cmat(p, L.wv[h], dim, dh);
            Mat<T> s = (lc.q[h] * lc.k[h].transpose()) * scale;
            Mat<T>& a = lc.a[h];
            a = Mat<T>::Zero(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                T mx = s(i, 0);
                for (std::size_t j = 1; j <= i; ++j) {
                    mx = std::max(mx, s(i, j));
                }
                T sum = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    a(i, j) = std::exp(s(i, j) - mx);
                    sum += a(i, j);
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    a(i, j) /= sum;
                }
            }
            lc.o[h] = a * lc.v[h];
            attn_out.noalias() += lc.o[h] * cmat(p, L.wo[h], dh, dim);
        }
        x += attn_out;
        lc.x_mid = x;

        lc.h2 = layer_norm<T>(x, crow(p, L.ln2_gain, dim), crow(p, L.ln2_bias, dim), lc.ln2);
        lc.u = (lc.h2 * cmat(p, L.ffn_w1, dim, cfg.ffn_dim())).rowwise() + crow(p, L.ffn_b1, cfg.ffn_dim());
        lc.g = lc.u.unaryExpr([](T v) { return gelu(v); });
        Mat<T> f = (lc.g * cmat(p, L.ffn_w2, cfg.ffn_dim(), dim)).rowwise() + crow(p, L.ffn_b2, dim);
        x += f;
    }

    c.x_final = x;
    c.hf = layer_norm<T>(x, crow(p, layout.final_gain(), dim), crow(p, layout.final_bias(), dim), c.lnf);
    c.logits = c.hf * cmat(p, layout.unembed(), dim, cfg.vocab_size);
    return c;
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
template <typename T>
void backward(const ParamLayout& layout, std::span<const T> p, const Cache<T>& c, const Mat<T>& dlogits,
              const GradRequest& req, std::span<T> grads) {
    const ModelConfig& cfg = layout.config();
    const std::size_t n = c.n;
    const std::size_t dim = cfg.model_dim;
    const std::size_t dh = cfg.head_dim();
    const std::size_t ffn = cfg.ffn_dim();
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const bool all = req.all;
    const std::size_t lowest = all ? 0 : req.head.layer;

    if (all) {
        mmat(grads, layout.unembed(), dim, cfg.vocab_size).noalias() += c.hf.transpose() * dlogits;
    }
    Mat<T> dhf = dlogits * cmat(p, layout.unembed(), dim, cfg.vocab_size).transpose();
    Mat<T> dx;
    {
        auto gg = mrow(grads, layout.final_gain(), dim);
        auto gb = mrow(grads, layout.final_bias(), dim);
        dx = layer_norm_backward<T>(dhf, crow(p, layout.final_gain(), dim), c.lnf, all ? &gg : nullptr,
                                    all ? &gb : nullptr);
    }

    for (std::size_t li = cfg.num_layers; li-- > lowest;) {
        const auto& L = layout.layer(li);
        const LayerCache<T>& lc = c.layers[li];

        // Feed-forward block.
        Mat<T> dg = dx * cmat(p, L.ffn_w2, ffn, dim).transpose();
        if (all) {
            mmat(grads, L.ffn_w2, ffn, dim).noalias() += lc.g.transpose() * dx;
            mrow(grads, L.ffn_b2, dim) += dx.colwise().sum();
        }
        Mat<T> du = dg.array() * lc.u.unaryExpr([](T v) { return gelu_grad(v); }).array();
        if (all) {
            mmat(grads, L.ffn_w1, dim, ffn).noalias() += lc.h2.transpose() * du;
            mrow(grads, L.ffn_b1, ffn) += du.colwise().sum();
        }
        Mat<T> dh2 = du * cmat(p, L.ffn_w1, dim, ffn).transpose();
        Mat<T> dx_mid;
        {
            auto gg = mrow(grads, L.ln2_gain, dim);
            auto gb = mrow(grads, L.ln2_bias, dim);
            dx_mid = dx + layer_norm_backward<T>(dh2, crow(p, L.ln2_gain, dim), lc.ln2, all ? &gg : nullptr,
                                                 all ? &gb : nullptr);
        }

        // Attention block.
        const bool target_layer = !all && li == req.head.layer;
        Mat<T> dh1 = Mat<T>::Zero(n, dim);
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            if (target_layer && h != req.head.head) {
                continue;
            }
            Mat<T> d_o = dx_mid * cmat(p, L.wo[h], dh, dim).transpose();
            if (all) {
                mmat(grads, L.wo[h], dh, dim).noalias() += lc.o[h].transpose() * dx_mid;
            }
            const Mat<T>& a = lc.a[h];
            Mat<T> da = d_o * lc.v[h].transpose();
            Mat<T> dv = a.transpose() * d_o;
            Mat<T> ds = Mat<T>::Zero(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                T dot = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    dot += a(i, j) * da(i, j);
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    ds(i, j) = a(i, j) * (da(i, j) - dot) * scale;
                }
            }
            Mat<T> dq = ds * lc.k[h];
            Mat<T> dk = ds.transpose() * lc.q[h];
            const bool head_params = all || target_layer;
            if (head_params && (all || req.query)) {
                mmat(grads, L.wq[h], dim, dh).noalias() += lc.h1.transpose() * dq;
            }
            if (head_params && (all || req.key)) {
                mmat(grads, L.wk[h], dim, dh).noalias() += lc.h1.transpose() * dk;
            }
            if (all) {
                mmat(grads, L.wv[h], dim, dh).noalias() += lc.h1.transpose() * dv;
            }
            if (!target_layer) {
                dh1.noalias() += dq * cmat(p, L.wq[h], dim, dh).transpose();
                dh1.noalias() += dk * cmat(p, L.wk[h], dim, dh).transpose();
                dh1.noalias() += dv * cmat(p, L.wv[h], dim, dh).transpose();
            }
        }
        if (target_layer) {
            return;
        }
        auto gg = mrow(grads, L.ln1_gain, dim);
        auto gb = mrow(grads, L.ln1_bias, dim);
        dx = dx_mid + layer_norm_backward<T>(dh1, crow(p, L.ln1_gain, dim), lc.ln1, all ? &gg : nullptr,
                                             all ? &gb : nullptr);
    }

    if (all) {
        auto tok = mmat(grads, layout.tok_emb(), cfg.vocab_size, dim);
        auto pos = mmat(grads, layout.pos_emb(), cfg.max_seq_len, dim);
        for (std::size_t i = 0; i < n; ++i) {
            tok.row(c.tokens[i]) += dx.row(i);
            pos.row(i) += dx.row(i);
        }
    }
}

inline constexpr double kProbFloor = 1e-12;

/// Softmax of the final-position logits, evaluated in double.
template <typename T>
std::vector<double> last_softmax(const Cache<T>& c) {
    const auto row = c.logits.row(static_cast<Eigen::Index>(c.n - 1));
    const std::size_t vocab = static_cast<std::size_t>(row.size());
    double mx = static_cast<double>(row(0));
    for (std::size_t i = 1; i < vocab; ++i) {
        mx = std::max(mx, static_cast<double>(row(i)));
    }
    std::vector<double> probs(vocab);
    double sum = 0.0;
    for (std::size_t i = 0; i < vocab; ++i) {
        probs[i] = std::exp(static_cast<double>(row(i)) - mx);
        sum += probs[i];
    }
    for (double& v : probs) {
        v /= sum;
    }
    return probs;
}

/// Mean answer-token NLL; when `grads` is given also accumulates its gradient.
template <typename T>
double answer_loss(const ParamLayout& layout, std::span<const T> p, std::span<const AnswerExample> batch,
                   const GradRequest* req = nullptr, std::span<T> grads = {}) {
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const AnswerExample& ex : batch) {
        Cache<T> c = forward<T>(layout, p, ex.prompt);
        std::vector<double> probs = last_softmax(c);
        total += -std::log(std::max(probs[ex.answer], kProbFloor));
        if (req != nullptr) {
            Mat<T> dlogits = Mat<T>::Zero(static_cast<Eigen::Index>(c.n), static_cast<Eigen::Index>(probs.size()));
            for (std::size_t v = 0; v < probs.size(); ++v) {
                const double target = v == ex.answer ? 1.0 : 0.0;
                dlogits(static_cast<Eigen::Index>(c.n - 1), static_cast<Eigen::Index>(v)) =
                    static_cast<T>((probs[v] - target) * inv);
            }
            backward<T>(layout, p, c, dlogits, *req, grads);
        }
    }
    return total * inv;
}

}  // namespace ablb::detail
