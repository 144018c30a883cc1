#include "ul2r/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ul2r/errors.hpp"

namespace ul2r {

const char* denoiser_kind_name(DenoiserKind kind) {
    switch (kind) {
    case DenoiserKind::R: return "R";
    case DenoiserKind::X: return "X";
    case DenoiserKind::S: return "S";
    }
    return "?";
}

TokenId mode_token_for(DenoiserKind kind) {
    switch (kind) {
    case DenoiserKind::R: return vocab::kModeNLU;
    case DenoiserKind::X: return vocab::kModeNLG;
    case DenoiserKind::S: return vocab::kModeS2S;
    }
    return vocab::kModeS2S;
}

DenoiserSpec DenoiserSpec::regular(SpanParams p) {
    return {DenoiserKind::R, p.rate, p.mean_span, vocab::kModeNLU};
}

DenoiserSpec DenoiserSpec::extreme(SpanParams p) {
    return {DenoiserKind::X, p.rate, p.mean_span, vocab::kModeNLG};
}

DenoiserSpec DenoiserSpec::sequential() {
    return {DenoiserKind::S, 0.0, 1.0, vocab::kModeS2S};
}

void MixtureConfig::validate() const {
    auto check = [](double a, double b, double c, const char* what) {
        if (a < 0 || b < 0 || c < 0 || std::abs(a + b + c - 1.0) > 1e-9) {
            throw Error(ErrorCode::config, std::string(what) + " weights must be non-negative and sum to 1");
        }
    };
    check(weight_s, weight_r, weight_x, "mixture");
    check(x_long_weight, x_high_weight, 0.0, "x sub-variant");
    for (const SpanParams& p : {r_params, x_long_params, x_high_params}) {
        if (!(p.rate >= 0.0 && p.rate < 1.0) || !(p.mean_span >= 1.0)) {
            throw Error(ErrorCode::config, "span parameters need 0 <= rate < 1 and mean_span >= 1");
        }
    }
}

DenoiserSpec sample_denoiser(const MixtureConfig& cfg, Rng& rng) {
    cfg.validate();
    const double u = rng.uniform();
    if (u < cfg.weight_s) {
        return DenoiserSpec::sequential();
    }
    if (u < cfg.weight_s + cfg.weight_r) {
        return DenoiserSpec::regular(cfg.r_params);
    }
    const bool long_variant = rng.uniform() < cfg.x_long_weight;
    return DenoiserSpec::extreme(long_variant ? cfg.x_long_params : cfg.x_high_params);
}

namespace {

// Uniformly random composition of `total` into `parts` positive integers.
std::vector<std::size_t> random_composition(std::size_t total, std::size_t parts, Rng& rng) {
    // Choose parts-1 distinct cut points from {1, .., total-1}.
    std::vector<std::size_t> candidates(total - 1);
    std::iota(candidates.begin(), candidates.end(), std::size_t{1});
    for (std::size_t i = 0; i + 1 < parts; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(candidates.size()) - 1));
        std::swap(candidates[i], candidates[j]);
    }
    std::vector<std::size_t> cuts(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(parts - 1));
    std::sort(cuts.begin(), cuts.end());
    std::vector<std::size_t> out;
    out.reserve(parts);
    std::size_t prev = 0;
    for (std::size_t c : cuts) {
        out.push_back(c - prev);
        prev = c;
    }
    out.push_back(total - prev);
    return out;
}

} // namespace

SpanSet sample_spans(std::size_t n, double rate, double mean_span, Rng& rng) {
    if (n < 2) {
        throw Error(ErrorCode::input_too_short, "span corruption needs a sequence of length >= 2");
    }
    if (!(rate >= 0.0 && rate < 1.0) || !(mean_span >= 1.0)) {
        throw Error(ErrorCode::precondition, "span sampling needs 0 <= rate < 1 and mean_span >= 1");
    }
    if (rate == 0.0) {
        return {};
    }
    const auto noise = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(static_cast<double>(n) * rate)));
    const auto span_count = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(static_cast<double>(noise) / mean_span)));
    if (noise + span_count > n) {
        throw Error(ErrorCode::input_too_short,
                    "sequence of length " + std::to_string(n) + " cannot hold " + std::to_string(noise) +
                        " noise tokens in " + std::to_string(span_count) + " separated spans");
    }

    const std::vector<std::size_t> noise_lengths = random_composition(noise, span_count, rng);
    // Kept tokens: span_count+1 segments, all but the last non-empty. Sample a
    // positive composition of kept+1 and take one back from the last segment.
    std::vector<std::size_t> kept_lengths = random_composition(n - noise + 1, span_count + 1, rng);
    kept_lengths.back() -= 1;

    SpanSet spans;
    spans.reserve(span_count);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < span_count; ++i) {
        pos += kept_lengths[i];
        spans.push_back({pos, noise_lengths[i]});
        pos += noise_lengths[i];
    }
    return spans;
}

void validate_spans(const SpanSet& spans, std::size_t n) {
    std::size_t next_allowed = 1;  // position 0 is always kept
    for (const Span& s : spans) {
        if (s.length == 0 || s.start < next_allowed || s.start + s.length > n) {
            throw Error(ErrorCode::malformed_example, "span set is unsorted, overlapping, unseparated or out of range");
        }
        next_allowed = s.start + s.length + 1;
    }
}

CorruptedExample corrupt_spans(const TokenSeq& seq, const SpanSet& spans, std::optional<TokenId> mode) {
    if (spans.size() > static_cast<std::size_t>(vocab::kSentinelCount)) {
        throw Error(ErrorCode::sentinel_exhausted,
                    std::to_string(spans.size()) + " spans exceed the budget of 100 sentinels");
    }
    validate_spans(spans, seq.size());

    CorruptedExample ex;
    ex.mode = mode;
    ex.original_len = seq.size();
    if (mode) {
        ex.inputs.push_back(*mode);
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < spans.size(); ++k) {
        const Span& s = spans[k];
        const TokenId sent = vocab::sentinel(static_cast<int>(k));
        ex.inputs.insert(ex.inputs.end(), seq.begin() + static_cast<std::ptrdiff_t>(pos),
                         seq.begin() + static_cast<std::ptrdiff_t>(s.start));
        ex.inputs.push_back(sent);
        ex.targets.push_back(sent);
        ex.targets.insert(ex.targets.end(), seq.begin() + static_cast<std::ptrdiff_t>(s.start),
                          seq.begin() + static_cast<std::ptrdiff_t>(s.start + s.length));
        pos = s.start + s.length;
    }
    ex.inputs.insert(ex.inputs.end(), seq.begin() + static_cast<std::ptrdiff_t>(pos), seq.end());
    ex.targets.push_back(vocab::kEos);
    return ex;
}

CorruptedExample corrupt_sequential_at(const TokenSeq& seq, std::size_t split, std::optional<TokenId> mode) {
    const std::size_t n = seq.size();
    if (n < 2) {
        throw Error(ErrorCode::input_too_short, "sequential corruption needs a sequence of length >= 2");
    }
    if (split < 1 || split > n - 1) {
        throw Error(ErrorCode::precondition, "split point must lie in [1, n-1]");
    }
    CorruptedExample ex;
    ex.mode = mode;
    ex.original_len = n;
    if (mode) {
        ex.inputs.push_back(*mode);
    }
    ex.inputs.insert(ex.inputs.end(), seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(split));
    ex.targets.assign(seq.begin() + static_cast<std::ptrdiff_t>(split), seq.end());
    ex.targets.push_back(vocab::kEos);
    return ex;
}

CorruptedExample corrupt_sequential(const TokenSeq& seq, Rng& rng) {
    if (seq.size() < 2) {
        throw Error(ErrorCode::input_too_short, "sequential corruption needs a sequence of length >= 2");
    }
    const auto split = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(seq.size()) - 1));
    return corrupt_sequential_at(seq, split, vocab::kModeS2S);
}

CorruptedExample causal_example(const TokenSeq& seq) {
    return corrupt_sequential_at(seq, 1, std::nullopt);
}

CorruptedExample apply_denoiser(const TokenSeq& seq, const DenoiserSpec& spec, Rng& rng,
                                const CorruptOptions& opts) {
    const std::optional<TokenId> mode =
        opts.mode_tokens ? std::optional<TokenId>(mode_token_for(spec.kind)) : std::nullopt;
    if (spec.kind == DenoiserKind::S) {
        if (seq.size() < 2) {
            throw Error(ErrorCode::input_too_short, "sequential corruption needs a sequence of length >= 2");
        }
        std::size_t split = 0;
        if (opts.s_split > 0) {
            split = std::min(opts.s_split, seq.size() - 1);
        } else {
            split = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(seq.size()) - 1));
        }
        return corrupt_sequential_at(seq, split, mode);
    }
    return corrupt_spans(seq, sample_spans(seq.size(), spec.rate, spec.mean_span, rng), mode);
}

TokenSeq reconstruct(const CorruptedExample& ex) {
    auto malformed = [](const std::string& why) { return Error(ErrorCode::malformed_example, why); };

    std::size_t in_begin = 0;
    if (ex.mode) {
        if (ex.inputs.empty() || ex.inputs.front() != *ex.mode) {
            throw malformed("inputs do not begin with the mode token");
        }
        in_begin = 1;
    }
    if (ex.targets.empty() || ex.targets.back() != vocab::kEos) {
        throw malformed("targets do not end with <eos>");
    }
    const std::size_t tgt_end = ex.targets.size() - 1;

    const bool has_sentinel =
        std::any_of(ex.inputs.begin(), ex.inputs.end(), vocab::is_sentinel) ||
        std::any_of(ex.targets.begin(), ex.targets.end(), vocab::is_sentinel);

    TokenSeq out;
    if (!has_sentinel) {
        out.assign(ex.inputs.begin() + static_cast<std::ptrdiff_t>(in_begin), ex.inputs.end());
        out.insert(out.end(), ex.targets.begin(), ex.targets.begin() + static_cast<std::ptrdiff_t>(tgt_end));
    } else {
        if (ex.mode == vocab::kModeS2S) {
            throw malformed("sequential example contains sentinels");
        }
        // Split targets into per-sentinel spans.
        std::vector<std::pair<std::size_t, std::size_t>> target_spans;  // [begin, end) into targets
        if (tgt_end == 0 || !vocab::is_sentinel(ex.targets[0])) {
            throw malformed("targets do not start with a sentinel");
        }
        for (std::size_t i = 0; i < tgt_end; ++i) {
            const TokenId t = ex.targets[i];
            if (vocab::is_sentinel(t)) {
                if (vocab::sentinel_index(t) != static_cast<int>(target_spans.size())) {
                    throw malformed("target sentinels out of order");
                }
                if (!target_spans.empty()) target_spans.back().second = i;
                target_spans.push_back({i + 1, tgt_end});
            } else if (!vocab::is_byte(t)) {
                throw malformed("unexpected special token in targets");
            }
        }
        std::size_t next = 0;
        for (std::size_t i = in_begin; i < ex.inputs.size(); ++i) {
            const TokenId t = ex.inputs[i];
            if (vocab::is_sentinel(t)) {
                if (vocab::sentinel_index(t) != static_cast<int>(next) || next >= target_spans.size()) {
                    throw malformed("input sentinel " + std::to_string(vocab::sentinel_index(t)) +
                                    " has no matching target span");
                }
                const auto [b, e] = target_spans[next++];
                out.insert(out.end(), ex.targets.begin() + static_cast<std::ptrdiff_t>(b),
                           ex.targets.begin() + static_cast<std::ptrdiff_t>(e));
            } else {
                out.push_back(t);
            }
        }
        if (next != target_spans.size()) {
            throw malformed("targets carry sentinels absent from inputs");
        }
    }
    if (out.size() != ex.original_len) {
        throw malformed("reconstructed length " + std::to_string(out.size()) + " differs from original_len " +
                        std::to_string(ex.original_len));
    }
    return out;
}

} // namespace ul2r
