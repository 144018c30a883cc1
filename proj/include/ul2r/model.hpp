#pragma once

// Decoder-only transformer with an arbitrary per-row attention mask.
//
// Architecture (pre-norm):
//   h0      = tok_emb[x] + pos_emb[t]
//   h      += Wo * MHA(LN1(h))          (masked softmax attention)
//   h      += W2 * gelu(W1 * LN2(h))    (exact erf GELU)
//   logits  = W_out * LNf(h) + b_out
// Position j of a row is scored with the distribution produced at j-1.
//
// Parameter count (V vocab, L max_len, d d_model, f d_ff, n layers):
//   N = V*d + L*d + n*(4*d*d + 4*d + 2*d*f + f + d + 4*d) + 2*d + d*V + V

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ul2r/packer.hpp"
#include "ul2r/tokenizer.hpp"

namespace ul2r {

struct ModelConfig {
    int vocab = vocab::kSize;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int max_len = 512;

    std::size_t param_count() const;
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr double kEmbeddingInitStd = 0.02;
inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct LayerParams {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct Params {
    ModelConfig cfg;
    Tensor<T> tok_emb;  // V x d
    Tensor<T> pos_emb;  // L x d
    std::vector<LayerParams<T>> layers;
    Tensor<T> lnf_g, lnf_b;
    Tensor<T> w_out;  // d x V
    Tensor<T> b_out;  // 1 x V
};

// Gradients share the parameter layout.
template <typename T>
using Grads = Params<T>;

template <typename T>
struct NamedTensor {
    std::string name;
    int rank = 2;  // 1 for vectors stored as 1 x n
    Tensor<T>* tensor = nullptr;
};

// Every tensor in a fixed canonical order; names are stable checkpoint keys.
template <typename T>
std::vector<NamedTensor<T>> named_tensors(Params<T>& params);

template <typename T>
Params<T> zeros_like(const ModelConfig& cfg);

template <typename T>
Params<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename To, typename From>
Params<To> cast_params(const Params<From>& params);

template <typename T>
bool all_finite(const Params<T>& params);

template <typename T>
struct LossResult {
    double loss = 0.0;  // mean negative log-likelihood over loss-mask positions
    std::size_t scored = 0;
    // Per row and position: log p(row[j]) at positions with loss_mask = 1, 0 elsewhere.
    std::vector<std::vector<double>> token_logprobs;
};

template <typename T>
LossResult<T> forward_loss(const Params<T>& params, const PackedBatch& batch, const AttentionMask& mask);

template <typename T>
struct GradResult {
    double loss = 0.0;
    std::size_t scored = 0;
    Grads<T> grads;
};

template <typename T>
GradResult<T> loss_and_grad(const Params<T>& params, const PackedBatch& batch, const AttentionMask& mask);

template <typename T>
Grads<T> grad(const Params<T>& params, const PackedBatch& batch, const AttentionMask& mask) {
    return loss_and_grad(params, batch, mask).grads;
}

// Log-softmax over the vocabulary at every position of one row, using the
// row-major n x n mask `allowed`. Returns an n x V matrix.
template <typename T>
Tensor<double> row_log_probs(const Params<T>& params, const TokenSeq& tokens, const std::vector<std::uint8_t>& allowed);

// Mask for a single segment of length n whose first `prefix_len` positions are bidirectional.
std::vector<std::uint8_t> single_segment_mask(std::size_t n, std::size_t prefix_len);

} // namespace ul2r
