#include "ul2r/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "ul2r/errors.hpp"
#include "ul2r/rng.hpp"

namespace ul2r {

std::size_t ModelConfig::param_count() const {
    const std::size_t V = static_cast<std::size_t>(vocab);
    const std::size_t L = static_cast<std::size_t>(max_len);
    const std::size_t d = static_cast<std::size_t>(d_model);
    const std::size_t f = static_cast<std::size_t>(d_ff);
    const std::size_t n = static_cast<std::size_t>(n_layers);
    return V * d + L * d + n * (4 * d * d + 4 * d + 2 * d * f + f + d + 4 * d) + 2 * d + d * V + V;
}

void ModelConfig::validate() const {
    if (vocab <= 0 || d_model <= 0 || n_layers < 0 || n_heads <= 0 || d_ff <= 0 || max_len <= 0) {
        throw Error(ErrorCode::config, "model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw Error(ErrorCode::config, "d_model must be divisible by n_heads");
    }
}

std::vector<std::uint8_t> single_segment_mask(std::size_t n, std::size_t prefix_len) {
    std::vector<std::uint8_t> m(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            m[i * n + j] = (j < prefix_len || j <= i) ? 1 : 0;
        }
    }
    return m;
}

template <typename T>
std::vector<NamedTensor<T>> named_tensors(Params<T>& p) {
    std::vector<NamedTensor<T>> out;
    out.push_back({"tok_emb", 2, &p.tok_emb});
    out.push_back({"pos_emb", 2, &p.pos_emb});
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        LayerParams<T>& lp = p.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        out.push_back({pre + "ln1_g", 1, &lp.ln1_g});
        out.push_back({pre + "ln1_b", 1, &lp.ln1_b});
        out.push_back({pre + "wq", 2, &lp.wq});
        out.push_back({pre + "bq", 1, &lp.bq});
        out.push_back({pre + "wk", 2, &lp.wk});
        out.push_back({pre + "bk", 1, &lp.bk});
        out.push_back({pre + "wv", 2, &lp.wv});
        out.push_back({pre + "bv", 1, &lp.bv});
        out.push_back({pre + "wo", 2, &lp.wo});
        out.push_back({pre + "bo", 1, &lp.bo});
        out.push_back({pre + "ln2_g", 1, &lp.ln2_g});
        out.push_back({pre + "ln2_b", 1, &lp.ln2_b});
        out.push_back({pre + "w1", 2, &lp.w1});
        out.push_back({pre + "b1", 1, &lp.b1});
        out.push_back({pre + "w2", 2, &lp.w2});
        out.push_back({pre + "b2", 1, &lp.b2});
    }
    out.push_back({"lnf_g", 1, &p.lnf_g});
    out.push_back({"lnf_b", 1, &p.lnf_b});
    out.push_back({"w_out", 2, &p.w_out});
    out.push_back({"b_out", 1, &p.b_out});
    return out;
}

template <typename T>
Params<T> zeros_like(const ModelConfig& cfg) {
    cfg.validate();
    const int V = cfg.vocab, d = cfg.d_model, f = cfg.d_ff;
    Params<T> p;
    p.cfg = cfg;
    p.tok_emb = Tensor<T>::Zero(V, d);
    p.pos_emb = Tensor<T>::Zero(cfg.max_len, d);
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (LayerParams<T>& lp : p.layers) {
        lp.ln1_g = Tensor<T>::Zero(1, d);
        lp.ln1_b = Tensor<T>::Zero(1, d);
        lp.wq = Tensor<T>::Zero(d, d);
        lp.bq = Tensor<T>::Zero(1, d);
        lp.wk = Tensor<T>::Zero(d, d);
        lp.bk = Tensor<T>::Zero(1, d);
        lp.wv = Tensor<T>::Zero(d, d);
        lp.bv = Tensor<T>::Zero(1, d);
        lp.wo = Tensor<T>::Zero(d, d);
        lp.bo = Tensor<T>::Zero(1, d);
        lp.ln2_g = Tensor<T>::Zero(1, d);
        lp.ln2_b = Tensor<T>::Zero(1, d);
        lp.w1 = Tensor<T>::Zero(d, f);
        lp.b1 = Tensor<T>::Zero(1, f);
        lp.w2 = Tensor<T>::Zero(f, d);
        lp.b2 = Tensor<T>::Zero(1, d);
    }
    p.lnf_g = Tensor<T>::Zero(1, d);
    p.lnf_b = Tensor<T>::Zero(1, d);
    p.w_out = Tensor<T>::Zero(d, V);
    p.b_out = Tensor<T>::Zero(1, V);
    return p;
}

template <typename T>
Params<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    Params<T> p = zeros_like<T>(cfg);
    Rng rng(seed);
    auto fill = [&rng](Tensor<T>& t, double stddev) {
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(rng.normal() * stddev);
    };
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    fill(p.tok_emb, kEmbeddingInitStd);
    fill(p.pos_emb, kEmbeddingInitStd);
    for (LayerParams<T>& lp : p.layers) {
        lp.ln1_g.setOnes();
        lp.ln2_g.setOnes();
        fill(lp.wq, proj_std);
        fill(lp.wk, proj_std);
        fill(lp.wv, proj_std);
        fill(lp.wo, proj_std);
        fill(lp.w1, proj_std);
        fill(lp.w2, proj_std);
    }
    p.lnf_g.setOnes();
    fill(p.w_out, proj_std);
    return p;
}

template <typename To, typename From>
Params<To> cast_params(const Params<From>& src) {
    Params<To> out = zeros_like<To>(src.cfg);
    auto from = named_tensors(const_cast<Params<From>&>(src));
    auto to = named_tensors(out);
    for (std::size_t i = 0; i < from.size(); ++i) *to[i].tensor = from[i].tensor->template cast<To>();
    return out;
}

template <typename T>
bool all_finite(const Params<T>& params) {
    for (const auto& nt : named_tensors(const_cast<Params<T>&>(params))) {
        if (!nt.tensor->allFinite()) return false;
    }
    return true;
}

namespace {

template <typename T>
using Mat = Tensor<T>;
template <typename T>
using Col = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct NormCache {
    Mat<T> xhat;
    Col<T> rstd;
};

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, NormCache<T>& c) {
    const Eigen::Index n = x.rows(), d = x.cols();
    c.xhat.resize(n, d);
    c.rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T mu = x.row(i).mean();
        auto centered = (x.row(i).array() - mu).eval();
        const T var = centered.square().mean();
        const T r = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        c.xhat.row(i) = centered * r;
        c.rstd(i) = r;
    }
    return ((c.xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array()).matrix();
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& g, const NormCache<T>& c, Mat<T>& dg, Mat<T>& db) {
    dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    db += dy.colwise().sum();
    const Mat<T> dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const T m1 = dxhat.row(i).mean();
        const T m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
        dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
    }
    return dx;
}

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>((std::numbers::sqrt2 / 2))));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>((std::numbers::sqrt2 / 2))));
    const T pdf = std::exp(T(-0.5) * x * x) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <typename T>
Mat<T> affine(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
    Mat<T> y = x * w;
    y.rowwise() += b.row(0);
    return y;
}

template <typename T>
struct LayerCache {
    Mat<T> h_in;
    NormCache<T> ln1;
    Mat<T> a;  // LN1 output
    Mat<T> q, k, v;
    std::vector<std::vector<Mat<T>>> probs;  // per head, per diagonal block
    Mat<T> o;                   // concatenated head outputs
    Mat<T> h_mid;
    NormCache<T> ln2;
    Mat<T> c;  // LN2 output
    Mat<T> u;  // FFN pre-activation
    Mat<T> g;  // FFN activation
};

template <typename T>
struct RowCache {
    std::vector<TokenId> tokens;
    const std::uint8_t* allowed = nullptr;
    std::size_t stride = 0;
    std::vector<Eigen::Index> positions;  // position-table index per token
    std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;  // (start, length)
    std::vector<LayerCache<T>> layers;
    NormCache<T> lnf;
    Mat<T> hf;
};


// Position of offset j within a segment whose first token is `first`. A
// leading mode token shares position 0 with the next token, so text sits at
// the same positions with or without a mode token.
Eigen::Index segment_position(TokenId first, std::size_t j) {
    const std::size_t shift = (j > 0 && vocab::is_mode(first)) ? 1 : 0;
    return static_cast<Eigen::Index>(j - shift);
}

// Positions restart at every packed segment so a packed example sees the
// same embeddings as the same example alone in a row.
std::vector<Eigen::Index> segment_positions(const PackedBatch& batch, std::size_t row, std::size_t used) {
    std::vector<Eigen::Index> out(used, 0);
    for (const Segment& s : batch.segments[row]) {
        const TokenId first = batch.rows[row][s.start];
        for (std::size_t j = s.start; j < s.end && j < used; ++j) out[j] = segment_position(first, j - s.start);
    }
    return out;
}

std::vector<Eigen::Index> single_positions(const TokenSeq& tokens) {
    std::vector<Eigen::Index> out(tokens.size(), 0);
    for (std::size_t j = 0; j < tokens.size(); ++j) out[j] = segment_position(tokens.front(), j);
    return out;
}

// Splits [0, n) into the finest diagonal blocks that no allowed pair crosses.
// Packed segments become separate blocks, so attention costs the sum of
// squared segment lengths instead of the squared row length.
std::vector<std::pair<Eigen::Index, Eigen::Index>> attention_blocks(const std::uint8_t* allowed, std::size_t stride,
                                                                    Eigen::Index n) {
    std::vector<Eigen::Index> lo(static_cast<std::size_t>(n), n), hi(static_cast<std::size_t>(n), -1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::uint8_t* row = allowed + static_cast<std::size_t>(i) * stride;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (row[j]) {
                lo[static_cast<std::size_t>(i)] = std::min(lo[static_cast<std::size_t>(i)], j);
                hi[static_cast<std::size_t>(i)] = j;
            }
        }
    }
    std::vector<Eigen::Index> suffix_lo(static_cast<std::size_t>(n) + 1, n);
    for (Eigen::Index i = n; i-- > 0;) {
        suffix_lo[static_cast<std::size_t>(i)] = std::min(suffix_lo[static_cast<std::size_t>(i) + 1], lo[static_cast<std::size_t>(i)]);
    }
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    Eigen::Index start = 0, reach = -1;
    for (Eigen::Index b = 1; b <= n; ++b) {
        reach = std::max(reach, hi[static_cast<std::size_t>(b - 1)]);
        if (reach < b && suffix_lo[static_cast<std::size_t>(b)] >= b) {
            out.emplace_back(start, b - start);
            start = b;
        }
    }
    return out;
}

// Runs the trunk over tokens[0, n) and returns the final normalized hidden states (n x d).
template <typename T>
const Mat<T>& forward_trunk(const Params<T>& p, RowCache<T>& cache) {
    const ModelConfig& cfg = p.cfg;
    const auto n = static_cast<Eigen::Index>(cache.tokens.size());
    if (n > cfg.max_len) {
        throw Error(ErrorCode::context_overflow,
                    "row length " + std::to_string(n) + " exceeds max_len " + std::to_string(cfg.max_len));
    }
    const int d = cfg.d_model;
    const int heads = cfg.n_heads;
    const int dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    cache.blocks = attention_blocks(cache.allowed, cache.stride, n);
    Mat<T> h(n, d);
    for (Eigen::Index t = 0; t < n; ++t) {
        const TokenId id = cache.tokens[static_cast<std::size_t>(t)];
        if (id < 0 || id >= cfg.vocab) {
            throw Error(ErrorCode::out_of_vocab, "token id " + std::to_string(id) + " outside model vocabulary");
        }
        h.row(t) = p.tok_emb.row(id) + p.pos_emb.row(cache.positions[static_cast<std::size_t>(t)]);
    }

    cache.layers.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams<T>& lp = p.layers[l];
        LayerCache<T>& lc = cache.layers[l];
        lc.h_in = h;
        lc.a = layer_norm(h, lp.ln1_g, lp.ln1_b, lc.ln1);
        lc.q = affine(lc.a, lp.wq, lp.bq);
        lc.k = affine(lc.a, lp.wk, lp.bk);
        lc.v = affine(lc.a, lp.wv, lp.bv);
        lc.o.setZero(n, d);
        lc.probs.assign(static_cast<std::size_t>(heads), std::vector<Mat<T>>(cache.blocks.size()));
        for (int hd = 0; hd < heads; ++hd) {
            for (std::size_t bi = 0; bi < cache.blocks.size(); ++bi) {
                const auto [b0, len] = cache.blocks[bi];
                Mat<T> s = (lc.q.block(b0, hd * dh, len, dh) * lc.k.block(b0, hd * dh, len, dh).transpose()) * scale;
                Mat<T>& pr = lc.probs[static_cast<std::size_t>(hd)][bi];
                pr.setZero(len, len);
                for (Eigen::Index i = 0; i < len; ++i) {
                    const std::uint8_t* row_mask = cache.allowed + static_cast<std::size_t>(b0 + i) * cache.stride + b0;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (Eigen::Index j = 0; j < len; ++j) {
                        if (row_mask[j] && s(i, j) > mx) mx = s(i, j);
                    }
                    if (mx == -std::numeric_limits<T>::infinity()) continue;  // attends nothing
                    T sum = 0;
                    for (Eigen::Index j = 0; j < len; ++j) {
                        if (row_mask[j]) {
                            const T e = std::exp(s(i, j) - mx);
                            pr(i, j) = e;
                            sum += e;
                        }
                    }
                    pr.row(i) /= sum;
                }
                lc.o.block(b0, hd * dh, len, dh) = pr * lc.v.block(b0, hd * dh, len, dh);
            }
        }
        h += affine(lc.o, lp.wo, lp.bo);
        lc.h_mid = h;
        lc.c = layer_norm(h, lp.ln2_g, lp.ln2_b, lc.ln2);
        lc.u = affine(lc.c, lp.w1, lp.b1);
        lc.g = lc.u.unaryExpr([](T x) { return gelu(x); });
        h += affine(lc.g, lp.w2, lp.b2);
    }
    cache.hf = layer_norm(h, p.lnf_g, p.lnf_b, cache.lnf);
    return cache.hf;
}

// Back-propagates dhf (n x d) through the trunk into grads.
template <typename T>
void backward_trunk(const Params<T>& p, const RowCache<T>& cache, const Mat<T>& dhf, Grads<T>& gr) {
    const ModelConfig& cfg = p.cfg;
    const auto n = static_cast<Eigen::Index>(cache.tokens.size());
    const int d = cfg.d_model;
    const int heads = cfg.n_heads;
    const int dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Mat<T> dh_cur = layer_norm_backward(dhf, p.lnf_g, cache.lnf, gr.lnf_g, gr.lnf_b);

    for (std::size_t li = p.layers.size(); li-- > 0;) {
        const LayerParams<T>& lp = p.layers[li];
        const LayerCache<T>& lc = cache.layers[li];
        LayerParams<T>& lg = gr.layers[li];

        // Feed-forward branch.
        const Mat<T>& df = dh_cur;
        lg.w2.noalias() += lc.g.transpose() * df;
        lg.b2 += df.colwise().sum();
        Mat<T> dg = df * lp.w2.transpose();
        Mat<T> du = dg.binaryExpr(lc.u, [](T gval, T x) { return gval * gelu_grad(x); });
        lg.w1.noalias() += lc.c.transpose() * du;
        lg.b1 += du.colwise().sum();
        Mat<T> dc = du * lp.w1.transpose();
        Mat<T> dh_mid = dh_cur + layer_norm_backward(dc, lp.ln2_g, lc.ln2, lg.ln2_g, lg.ln2_b);

        // Attention branch.
        lg.wo.noalias() += lc.o.transpose() * dh_mid;
        lg.bo += dh_mid.colwise().sum();
        Mat<T> d_o = dh_mid * lp.wo.transpose();
        Mat<T> dq(n, d), dk(n, d), dv(n, d);
        for (int hd = 0; hd < heads; ++hd) {
            for (std::size_t bi = 0; bi < cache.blocks.size(); ++bi) {
                const auto [b0, len] = cache.blocks[bi];
                const Mat<T>& pr = lc.probs[static_cast<std::size_t>(hd)][bi];
                const auto d_oh = d_o.block(b0, hd * dh, len, dh);
                Mat<T> dp = d_oh * lc.v.block(b0, hd * dh, len, dh).transpose();
                dv.block(b0, hd * dh, len, dh) = pr.transpose() * d_oh;
                Mat<T> ds = pr.cwiseProduct(dp);
                const Col<T> row_dot = ds.rowwise().sum();
                ds -= (pr.array().colwise() * row_dot.array()).matrix();
                dq.block(b0, hd * dh, len, dh) = (ds * lc.k.block(b0, hd * dh, len, dh)) * scale;
                dk.block(b0, hd * dh, len, dh) = (ds.transpose() * lc.q.block(b0, hd * dh, len, dh)) * scale;
            }
        }
        lg.wq.noalias() += lc.a.transpose() * dq;
        lg.bq += dq.colwise().sum();
        lg.wk.noalias() += lc.a.transpose() * dk;
        lg.bk += dk.colwise().sum();
        lg.wv.noalias() += lc.a.transpose() * dv;
        lg.bv += dv.colwise().sum();
        Mat<T> da = dq * lp.wq.transpose();
        da.noalias() += dk * lp.wk.transpose();
        da.noalias() += dv * lp.wv.transpose();
        dh_cur = dh_mid + layer_norm_backward(da, lp.ln1_g, lc.ln1, lg.ln1_g, lg.ln1_b);
    }

    for (Eigen::Index t = 0; t < n; ++t) {
        gr.tok_emb.row(cache.tokens[static_cast<std::size_t>(t)]) += dh_cur.row(t);
        gr.pos_emb.row(cache.positions[static_cast<std::size_t>(t)]) += dh_cur.row(t);
    }
}

template <typename T>
void log_softmax_rows(Mat<T>& logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const T mx = logits.row(i).maxCoeff();
        const T lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        logits.row(i).array() -= lse;
    }
}

std::size_t count_scored(const PackedBatch& batch) {
    std::size_t total = 0;
    for (const auto& row : batch.loss_mask) {
        for (std::uint8_t m : row) total += m;
    }
    return total;
}

void check_shapes(const PackedBatch& batch, const AttentionMask& mask) {
    if (mask.row_len != batch.row_len || mask.allowed.size() != batch.row_count() ||
        batch.loss_mask.size() != batch.row_count()) {
        throw Error(ErrorCode::precondition, "attention mask and batch shapes disagree");
    }
}

// Scored positions of one row, restricted to the used prefix of the row.
std::vector<Eigen::Index> scored_positions(const PackedBatch& batch, std::size_t row, std::size_t used) {
    std::vector<Eigen::Index> out;
    for (std::size_t j = 0; j < used; ++j) {
        if (batch.loss_mask[row][j]) {
            if (j == 0) throw Error(ErrorCode::precondition, "position 0 cannot be a loss position");
            out.push_back(static_cast<Eigen::Index>(j));
        }
    }
    return out;
}

template <typename T>
Mat<T> gather_logits(const Params<T>& p, const Mat<T>& hf, const std::vector<Eigen::Index>& positions) {
    Mat<T> sel(static_cast<Eigen::Index>(positions.size()), hf.cols());
    for (std::size_t r = 0; r < positions.size(); ++r) sel.row(static_cast<Eigen::Index>(r)) = hf.row(positions[r] - 1);
    return affine(sel, p.w_out, p.b_out);
}

} // namespace

template <typename T>
LossResult<T> forward_loss(const Params<T>& params, const PackedBatch& batch, const AttentionMask& mask) {
    check_shapes(batch, mask);
    LossResult<T> res;
    res.scored = count_scored(batch);
    if (res.scored == 0) {
        throw Error(ErrorCode::empty_loss, "batch has no loss-mask positions");
    }
    res.token_logprobs.resize(batch.row_count());
    double total = 0.0;
    for (std::size_t row = 0; row < batch.row_count(); ++row) {
        res.token_logprobs[row].assign(batch.row_len, 0.0);
        const std::size_t used = batch.used_len(row);
        const std::vector<Eigen::Index> pos = scored_positions(batch, row, used);
        if (pos.empty()) continue;
        RowCache<T> cache;
        cache.tokens.assign(batch.rows[row].begin(), batch.rows[row].begin() + static_cast<std::ptrdiff_t>(used));
        cache.allowed = mask.allowed[row].data();
        cache.stride = mask.row_len;
        cache.positions = segment_positions(batch, row, used);
        const Mat<T>& hf = forward_trunk(params, cache);
        Mat<T> lp = gather_logits(params, hf, pos);
        log_softmax_rows(lp);
        for (std::size_t r = 0; r < pos.size(); ++r) {
            const auto j = static_cast<std::size_t>(pos[r]);
            const double v = static_cast<double>(lp(static_cast<Eigen::Index>(r), batch.rows[row][j]));
            res.token_logprobs[row][j] = v;
            total -= v;
        }
    }
    res.loss = total / static_cast<double>(res.scored);
    return res;
}

template <typename T>
GradResult<T> loss_and_grad(const Params<T>& params, const PackedBatch& batch, const AttentionMask& mask) {
    check_shapes(batch, mask);
    GradResult<T> res;
    res.scored = count_scored(batch);
    if (res.scored == 0) {
        throw Error(ErrorCode::empty_loss, "batch has no loss-mask positions");
    }
    res.grads = zeros_like<T>(params.cfg);
    const T inv_count = T(1) / static_cast<T>(res.scored);
    double total = 0.0;
    for (std::size_t row = 0; row < batch.row_count(); ++row) {
        const std::size_t used = batch.used_len(row);
        const std::vector<Eigen::Index> pos = scored_positions(batch, row, used);
        if (pos.empty()) continue;
        RowCache<T> cache;
        cache.tokens.assign(batch.rows[row].begin(), batch.rows[row].begin() + static_cast<std::ptrdiff_t>(used));
        cache.allowed = mask.allowed[row].data();
        cache.stride = mask.row_len;
        cache.positions = segment_positions(batch, row, used);
        const Mat<T>& hf = forward_trunk(params, cache);

        Mat<T> sel(static_cast<Eigen::Index>(pos.size()), hf.cols());
        for (std::size_t r = 0; r < pos.size(); ++r) sel.row(static_cast<Eigen::Index>(r)) = hf.row(pos[r] - 1);
        Mat<T> lp = affine(sel, params.w_out, params.b_out);
        log_softmax_rows(lp);

        // d loss / d logits = (softmax - onehot) / count
        Mat<T> dlogits = lp.array().exp().matrix();
        for (std::size_t r = 0; r < pos.size(); ++r) {
            const auto ri = static_cast<Eigen::Index>(r);
            const TokenId target = batch.rows[row][static_cast<std::size_t>(pos[r])];
            total -= static_cast<double>(lp(ri, target));
            dlogits(ri, target) -= T(1);
        }
        dlogits *= inv_count;

        res.grads.w_out.noalias() += sel.transpose() * dlogits;
        res.grads.b_out += dlogits.colwise().sum();
        const Mat<T> dsel = dlogits * params.w_out.transpose();
        Mat<T> dhf = Mat<T>::Zero(hf.rows(), hf.cols());
        for (std::size_t r = 0; r < pos.size(); ++r) dhf.row(pos[r] - 1) += dsel.row(static_cast<Eigen::Index>(r));
        backward_trunk(params, cache, dhf, res.grads);
    }
    res.loss = total / static_cast<double>(res.scored);
    return res;
}

template <typename T>
Tensor<double> row_log_probs(const Params<T>& params, const TokenSeq& tokens, const std::vector<std::uint8_t>& allowed) {
    const std::size_t n = tokens.size();
    if (allowed.size() != n * n) {
        throw Error(ErrorCode::precondition, "mask size does not match row length");
    }
    if (n == 0) return Tensor<double>(0, params.cfg.vocab);
    RowCache<T> cache;
    cache.tokens = tokens;
    cache.allowed = allowed.data();
    cache.stride = n;
    cache.positions = single_positions(tokens);
    const Mat<T>& hf = forward_trunk(params, cache);
    Mat<T> logits = affine(hf, params.w_out, params.b_out);
    Tensor<double> out = logits.template cast<double>();
    log_softmax_rows(out);
    return out;
}

#define UL2R_INSTANTIATE(T)                                                                                        \
    template std::vector<NamedTensor<T>> named_tensors<T>(Params<T>&);                                            \
    template Params<T> zeros_like<T>(const ModelConfig&);                                                         \
    template Params<T> init_params<T>(const ModelConfig&, std::uint64_t);                                         \
    template bool all_finite<T>(const Params<T>&);                                                                \
    template LossResult<T> forward_loss<T>(const Params<T>&, const PackedBatch&, const AttentionMask&);           \
    template GradResult<T> loss_and_grad<T>(const Params<T>&, const PackedBatch&, const AttentionMask&);         \
    template Tensor<double> row_log_probs<T>(const Params<T>&, const TokenSeq&, const std::vector<std::uint8_t>&);

UL2R_INSTANTIATE(float)
UL2R_INSTANTIATE(double)
#undef UL2R_INSTANTIATE

template Params<float> cast_params<float, double>(const Params<double>&);
template Params<double> cast_params<double, float>(const Params<float>&);
template Params<float> cast_params<float, float>(const Params<float>&);
template Params<double> cast_params<double, double>(const Params<double>&);

} // namespace ul2r
