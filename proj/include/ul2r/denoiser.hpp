#pragma once

// The three UL2 denoisers and their mixture:
//   R  regular span corruption        mode [NLU]
//   X  extreme span corruption        mode [NLG]  (long spans, or high rate)
//   S  sequential / prefix-LM split   mode [S2S]
//
// Span-corrupted examples use the sentinel format
//   inputs  = [mode] x0 .. <extra_id_0> .. <extra_id_1> ..
//   targets = <extra_id_0> span0 <extra_id_1> span1 .. <eos>

#include <cstddef>
#include <optional>
#include <vector>

#include "ul2r/rng.hpp"
#include "ul2r/tokenizer.hpp"

namespace ul2r {

enum class DenoiserKind { R, X, S };

const char* denoiser_kind_name(DenoiserKind kind);

struct SpanParams {
    double rate = 0.15;
    double mean_span = 3.0;
};

struct DenoiserSpec {
    DenoiserKind kind = DenoiserKind::S;
    double rate = 0.0;       // unused for S
    double mean_span = 1.0;  // unused for S
    TokenId mode_token = vocab::kModeS2S;

    static DenoiserSpec regular(SpanParams p = {0.15, 3.0});
    static DenoiserSpec extreme(SpanParams p);
    static DenoiserSpec sequential();
};

TokenId mode_token_for(DenoiserKind kind);

struct MixtureConfig {
    double weight_s = 0.5;
    double weight_r = 0.25;
    double weight_x = 0.25;
    // Split of X draws between the long-span and the high-rate variant.
    double x_long_weight = 0.5;
    double x_high_weight = 0.5;

    SpanParams r_params{0.15, 3.0};
    SpanParams x_long_params{0.15, 32.0};
    SpanParams x_high_params{0.5, 3.0};

    // Throws ErrorCode::config when weights are negative or do not sum to 1
    // within 1e-9.
    void validate() const;
};

struct Span {
    std::size_t start = 0;
    std::size_t length = 0;

    friend bool operator==(const Span&, const Span&) = default;
};

using SpanSet = std::vector<Span>;

struct CorruptedExample {
    // Absent only for mode-less examples (plain causal LM rows).
    std::optional<TokenId> mode;
    TokenSeq inputs;
    TokenSeq targets;
    std::size_t original_len = 0;

    friend bool operator==(const CorruptedExample&, const CorruptedExample&) = default;
};

DenoiserSpec sample_denoiser(const MixtureConfig& cfg, Rng& rng);

SpanSet sample_spans(std::size_t n, double rate, double mean_span, Rng& rng);

// Checks SpanSet invariants against a sequence of length n; throws
// malformed_example on violation.
void validate_spans(const SpanSet& spans, std::size_t n);

CorruptedExample corrupt_spans(const TokenSeq& seq, const SpanSet& spans, std::optional<TokenId> mode);

CorruptedExample corrupt_sequential(const TokenSeq& seq, Rng& rng);

// Sequential corruption with a pinned split point u in [1, n-1].
CorruptedExample corrupt_sequential_at(const TokenSeq& seq, std::size_t split,
                                       std::optional<TokenId> mode = vocab::kModeS2S);

// Plain causal-LM example: one-token prefix, the rest of the sequence as target.
CorruptedExample causal_example(const TokenSeq& seq);

struct CorruptOptions {
    bool mode_tokens = true;
    // 0 draws the S split uniformly; k > 0 pins it to min(k, n-1).
    std::size_t s_split = 0;
};

CorruptedExample apply_denoiser(const TokenSeq& seq, const DenoiserSpec& spec, Rng& rng,
                                const CorruptOptions& opts = {});

TokenSeq reconstruct(const CorruptedExample& ex);

} // namespace ul2r
