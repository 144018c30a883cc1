#pragma once

// Greedy decoding, sentinel infilling and log-likelihood scoring on a single
// prefix-LM segment: the prompt is the bidirectional prefix, generated or
// scored tokens are causal.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "ul2r/model.hpp"
#include "ul2r/tokenizer.hpp"

namespace ul2r {

struct InfillPrompt {
    // literals.size() == blank_count() + 1; blank k sits between literals[k] and literals[k+1].
    std::vector<TokenSeq> literals;
    std::optional<TokenId> mode;

    std::size_t blank_count() const { return literals.empty() ? 0 : literals.size() - 1; }
};

// Splits text on "<extra_id_k>" markers. Blanks are renumbered 0..m-1 in
// order of appearance. Throws precondition when there are no blanks or more
// than 100.
InfillPrompt parse_infill_prompt(std::string_view text, std::optional<TokenId> mode);

// [mode] literal0 <extra_id_0> literal1 <extra_id_1> ...
TokenSeq build_infill_inputs(const InfillPrompt& prompt);

struct InfillResult {
    std::vector<TokenSeq> fills;
    TokenSeq raw;
};

// Tokens after <extra_id_k> up to the next sentinel or <eos> form fills[k].
// A generation that stops without <eos> closes the last fill at its end.
// Throws parse (with the raw output in the message) when <extra_id_0> is absent.
InfillResult parse_infill_output(const TokenSeq& raw, std::size_t blanks);

// Returns the continuation (without the terminating <eos>).
template <typename T>
TokenSeq greedy_generate(const Params<T>& params, const TokenSeq& prompt, std::size_t max_tokens,
                         std::optional<TokenId> mode = std::nullopt);

template <typename T>
InfillResult infill(const Params<T>& params, const InfillPrompt& prompt, std::size_t max_tokens);

template <typename T>
double loglikelihood(const Params<T>& params, const TokenSeq& prefix, const TokenSeq& continuation,
                     std::optional<TokenId> mode = std::nullopt);

std::optional<TokenId> parse_mode_flag(std::string_view name);  // none|s2s|nlu|nlg

} // namespace ul2r
