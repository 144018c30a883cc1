#include "ul2r/inference.hpp"

#include <string>

#include "ul2r/errors.hpp"

namespace ul2r {

std::optional<TokenId> parse_mode_flag(std::string_view name) {
    if (name == "none" || name.empty()) return std::nullopt;
    if (name == "s2s") return vocab::kModeS2S;
    if (name == "nlu") return vocab::kModeNLU;
    if (name == "nlg") return vocab::kModeNLG;
    throw Error(ErrorCode::usage, "unknown mode '" + std::string(name) + "' (expected none, s2s, nlu or nlg)");
}

InfillPrompt parse_infill_prompt(std::string_view text, std::optional<TokenId> mode) {
    InfillPrompt p;
    p.mode = mode;
    p.literals.emplace_back();
    for (TokenId t : encode_with_sentinels(text)) {
        if (vocab::is_sentinel(t)) {
            p.literals.emplace_back();
        } else {
            p.literals.back().push_back(t);
        }
    }
    if (p.blank_count() == 0) {
        throw Error(ErrorCode::precondition, "infill prompt has no <extra_id_k> blank");
    }
    if (p.blank_count() > static_cast<std::size_t>(vocab::kSentinelCount)) {
        throw Error(ErrorCode::precondition, "infill prompt has more than 100 blanks");
    }
    return p;
}

TokenSeq build_infill_inputs(const InfillPrompt& prompt) {
    TokenSeq out;
    if (prompt.mode) out.push_back(*prompt.mode);
    for (std::size_t k = 0; k < prompt.literals.size(); ++k) {
        if (k > 0) out.push_back(vocab::sentinel(static_cast<int>(k - 1)));
        out.insert(out.end(), prompt.literals[k].begin(), prompt.literals[k].end());
    }
    return out;
}

InfillResult parse_infill_output(const TokenSeq& raw, std::size_t blanks) {
    InfillResult res;
    res.raw = raw;
    res.fills.assign(blanks, {});
    std::size_t i = 0;
    while (i < raw.size() && raw[i] != vocab::sentinel(0)) {
        if (raw[i] == vocab::kEos) break;
        ++i;
    }
    if (i == raw.size() || raw[i] != vocab::sentinel(0)) {
        throw Error(ErrorCode::parse, "generated output lacks <extra_id_0>: " + decode(raw));
    }
    std::optional<std::size_t> current;
    for (; i < raw.size(); ++i) {
        const TokenId t = raw[i];
        if (t == vocab::kEos) break;
        if (vocab::is_sentinel(t)) {
            const auto k = static_cast<std::size_t>(vocab::sentinel_index(t));
            if (k >= blanks) break;
            current = k;
        } else if (vocab::is_byte(t)) {
            if (current) res.fills[*current].push_back(t);
        } else {
            break;
        }
    }
    return res;
}

namespace {

template <typename T>
void check_context(const Params<T>& params, std::size_t needed) {
    if (needed > static_cast<std::size_t>(params.cfg.max_len)) {
        throw Error(ErrorCode::context_overflow, "sequence of " + std::to_string(needed) +
                                                     " tokens exceeds model context " +
                                                     std::to_string(params.cfg.max_len));
    }
}

} // namespace

template <typename T>
TokenSeq greedy_generate(const Params<T>& params, const TokenSeq& prompt, std::size_t max_tokens,
                         std::optional<TokenId> mode) {
    TokenSeq seq;
    if (mode) seq.push_back(*mode);
    seq.insert(seq.end(), prompt.begin(), prompt.end());
    const std::size_t prefix_len = seq.size();
    check_context(params, prefix_len + max_tokens);
    if (prefix_len == 0 && max_tokens > 0) {
        throw Error(ErrorCode::precondition, "generation needs a non-empty prompt");
    }

    TokenSeq out;
    for (std::size_t step = 0; step < max_tokens; ++step) {
        const Tensor<double> lp = row_log_probs(params, seq, single_segment_mask(seq.size(), prefix_len));
        const auto last = lp.row(lp.rows() - 1);
        TokenId best = 0;
        for (Eigen::Index v = 1; v < last.size(); ++v) {
            if (last(v) > last(best)) best = static_cast<TokenId>(v);
        }
        if (best == vocab::kEos) break;
        out.push_back(best);
        seq.push_back(best);
    }
    return out;
}

template <typename T>
InfillResult infill(const Params<T>& params, const InfillPrompt& prompt, std::size_t max_tokens) {
    if (prompt.blank_count() == 0) {
        throw Error(ErrorCode::precondition, "infill prompt has no blank");
    }
    const TokenSeq raw = greedy_generate(params, build_infill_inputs(prompt), max_tokens);
    return parse_infill_output(raw, prompt.blank_count());
}

template <typename T>
double loglikelihood(const Params<T>& params, const TokenSeq& prefix, const TokenSeq& continuation,
                     std::optional<TokenId> mode) {
    TokenSeq seq;
    if (mode) seq.push_back(*mode);
    seq.insert(seq.end(), prefix.begin(), prefix.end());
    const std::size_t prefix_len = seq.size();
    check_context(params, prefix_len + continuation.size());
    if (continuation.empty()) return 0.0;
    if (prefix_len == 0) {
        throw Error(ErrorCode::precondition, "scoring needs a non-empty prefix");
    }
    seq.insert(seq.end(), continuation.begin(), continuation.end());
    const Tensor<double> lp = row_log_probs(params, seq, single_segment_mask(seq.size(), prefix_len));
    double total = 0.0;
    for (std::size_t j = prefix_len; j < seq.size(); ++j) {
        total += lp(static_cast<Eigen::Index>(j - 1), seq[j]);
    }
    return total;
}

template TokenSeq greedy_generate<float>(const Params<float>&, const TokenSeq&, std::size_t, std::optional<TokenId>);
template TokenSeq greedy_generate<double>(const Params<double>&, const TokenSeq&, std::size_t, std::optional<TokenId>);
template InfillResult infill<float>(const Params<float>&, const InfillPrompt&, std::size_t);
template InfillResult infill<double>(const Params<double>&, const InfillPrompt&, std::size_t);
template double loglikelihood<float>(const Params<float>&, const TokenSeq&, const TokenSeq&, std::optional<TokenId>);
template double loglikelihood<double>(const Params<double>&, const TokenSeq&, const TokenSeq&, std::optional<TokenId>);

} // namespace ul2r
