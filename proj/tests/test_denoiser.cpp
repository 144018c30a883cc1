#include <doctest.h>

#include "helpers.hpp"
#include "ul2r/denoiser.hpp"
#include "ul2r/errors.hpp"

using namespace ul2r;

namespace {

TokenSeq iota_seq(std::size_t n) {
    TokenSeq s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<TokenId>(i);
    return s;
}

std::size_t noise_total(const SpanSet& spans) {
    std::size_t t = 0;
    for (const Span& s : spans) t += s.length;
    return t;
}

// Independent construction of the sentinel format from a span set.
CorruptedExample oracle_corrupt(const TokenSeq& x, const SpanSet& spans, TokenId mode) {
    CorruptedExample ex;
    ex.mode = mode;
    ex.original_len = x.size();
    ex.inputs.push_back(mode);
    std::vector<int> span_of(x.size(), -1);
    for (std::size_t k = 0; k < spans.size(); ++k)
        for (std::size_t p = spans[k].start; p < spans[k].start + spans[k].length; ++p) span_of[p] = int(k);
    for (std::size_t p = 0; p < x.size(); ++p) {
        if (span_of[p] < 0) {
            ex.inputs.push_back(x[p]);
        } else if (p == 0 || span_of[p - 1] != span_of[p]) {
            ex.inputs.push_back(vocab::sentinel(span_of[p]));
        }
    }
    for (std::size_t k = 0; k < spans.size(); ++k) {
        ex.targets.push_back(vocab::sentinel(int(k)));
        for (std::size_t p = spans[k].start; p < spans[k].start + spans[k].length; ++p) ex.targets.push_back(x[p]);
    }
    ex.targets.push_back(vocab::kEos);
    return ex;
}

} // namespace

TEST_CASE("mode tokens follow the denoiser kind") {
    CHECK(DenoiserSpec::regular().mode_token == vocab::kModeNLU);
    CHECK(DenoiserSpec::extreme({0.5, 3}).mode_token == vocab::kModeNLG);
    CHECK(DenoiserSpec::sequential().mode_token == vocab::kModeS2S);
}

TEST_CASE("sample_denoiser") {
    SUBCASE("degenerate mixture") {
        MixtureConfig cfg;
        cfg.weight_s = 1;
        cfg.weight_r = 0;
        cfg.weight_x = 0;
        Rng rng(1);
        for (int i = 0; i < 100; ++i) CHECK(sample_denoiser(cfg, rng).kind == DenoiserKind::S);
    }
    SUBCASE("bad weights") {
        MixtureConfig cfg;
        cfg.weight_s = 0.6;
        Rng rng(1);
        CHECK_THROWS_AS(sample_denoiser(cfg, rng), Error);
        cfg.weight_s = 0.5;
        cfg.x_long_weight = 0.7;
        CHECK_THROWS_AS(sample_denoiser(cfg, rng), Error);
    }
    SUBCASE("fixed seed reproduces the sequence") {
        Rng a(42), b(42);
        for (int i = 0; i < 1000; ++i) {
            const DenoiserSpec x = sample_denoiser({}, a), y = sample_denoiser({}, b);
            REQUIRE(x.kind == y.kind);
            REQUIRE(x.mean_span == y.mean_span);
            REQUIRE(x.rate == y.rate);
        }
    }
    SUBCASE("X sub-variants split evenly") {
        Rng rng(5);
        int x = 0, longs = 0;
        for (int i = 0; i < 100000; ++i) {
            const DenoiserSpec s = sample_denoiser({}, rng);
            if (s.kind != DenoiserKind::X) continue;
            ++x;
            if (s.mean_span == 32.0) {
                CHECK(s.rate == 0.15);
                ++longs;
            } else {
                CHECK(s.rate == 0.5);
                CHECK(s.mean_span == 3.0);
            }
        }
        CHECK(double(longs) / x == doctest::Approx(0.5).epsilon(0.03));
    }
}

TEST_CASE("sample_spans counts") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const SpanSet s = sample_spans(100, 0.15, 3, rng);
        CHECK(s.size() == 5);
        CHECK(noise_total(s) == 15);
        const SpanSet t = sample_spans(20, 0.15, 3, rng);
        CHECK(t.size() == 1);
        CHECK(noise_total(t) == 3);
    }
    CHECK(sample_spans(20, 0.0, 3, rng).empty());
    CHECK_THROWS_AS(sample_spans(1, 0.15, 3, rng), Error);
    CHECK_THROWS_AS(sample_spans(10, 1.0, 3, rng), Error);
    CHECK_THROWS_AS(sample_spans(10, 0.1, 0.5, rng), Error);
}

TEST_CASE("sample_spans feasibility boundary") {
    Rng rng(9);
    // n=4, r=0.5: 2 noise tokens in 1 span leave 2 kept tokens; feasible.
    for (int i = 0; i < 20; ++i) validate_spans(sample_spans(4, 0.5, 3, rng), 4);
    // n=3, r=0.9: 3 noise tokens leave none for position 0.
    CHECK_THROWS_AS(sample_spans(3, 0.9, 3, rng), Error);
    // n=10, r=0.5, mu=1: 5 noise tokens in 5 spans need 5 separators; 10 total.
    for (int i = 0; i < 20; ++i) {
        const SpanSet s = sample_spans(10, 0.5, 1, rng);
        validate_spans(s, 10);
        CHECK(s.size() == 5);
    }
    CHECK_THROWS_AS(sample_spans(10, 0.6, 1, rng), Error);
}

TEST_CASE("property: sampled spans satisfy the SpanSet invariants") {
    Rng rng(17);
    for (int i = 0; i < 5000; ++i) {
        const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 300));
        const double r = rng.uniform() * 0.6;
        const double mu = 1.0 + rng.uniform() * 40.0;
        const std::size_t noise = r > 0 ? std::max<std::size_t>(1, std::size_t(std::llround(n * r))) : 0;
        const std::size_t spans = noise ? std::max<std::size_t>(1, std::size_t(std::llround(noise / mu))) : 0;
        if (noise + spans > n) {
            CHECK_THROWS_AS(sample_spans(n, r, mu, rng), Error);
            continue;
        }
        const SpanSet s = sample_spans(n, r, mu, rng);
        REQUIRE_NOTHROW(validate_spans(s, n));
        REQUIRE(s.size() == spans);
        REQUIRE(noise_total(s) == noise);
        if (!s.empty()) REQUIRE(s.front().start > 0);
    }
}

TEST_CASE("corrupt_spans format") {
    const TokenSeq t = iota_seq(10);
    const TokenId s0 = vocab::sentinel(0), s1 = vocab::sentinel(1), nlu = vocab::kModeNLU;
    const CorruptedExample ex = corrupt_spans(t, {{2, 2}, {7, 1}}, nlu);
    CHECK(ex.inputs == TokenSeq{nlu, 0, 1, s0, 4, 5, 6, s1, 8, 9});
    CHECK(ex.targets == TokenSeq{s0, 2, 3, s1, 7, vocab::kEos});
    CHECK(ex.original_len == 10);

    const CorruptedExample none = corrupt_spans(t, {}, nlu);
    TokenSeq expect{nlu};
    expect.insert(expect.end(), t.begin(), t.end());
    CHECK(none.inputs == expect);
    CHECK(none.targets == TokenSeq{vocab::kEos});
    CHECK(reconstruct(none) == t);

    CHECK_THROWS_AS(corrupt_spans(t, {{0, 1}}, nlu), Error);
    CHECK_THROWS_AS(corrupt_spans(t, {{2, 2}, {4, 1}}, nlu), Error);
    CHECK_THROWS_AS(corrupt_spans(t, {{9, 2}}, nlu), Error);

    SpanSet many;
    for (std::size_t k = 0; k < 101; ++k) many.push_back({1 + 2 * k, 1});
    try {
        corrupt_spans(iota_seq(300), many, nlu);
        FAIL("expected sentinel_exhausted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::sentinel_exhausted);
    }
}

TEST_CASE("property: corrupt_spans matches an independent construction") {
    Rng rng(23);
    for (int i = 0; i < 3000; ++i) {
        const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 200));
        const TokenSeq x = test::random_bytes(rng, n);
        const double r = rng.uniform() * 0.5;
        SpanSet spans;
        try {
            spans = sample_spans(n, r, 1 + rng.uniform() * 10, rng);
        } catch (const Error&) {
            continue;
        }
        if (spans.size() > 100) continue;
        const CorruptedExample ex = corrupt_spans(x, spans, vocab::kModeNLG);
        REQUIRE(ex == oracle_corrupt(x, spans, vocab::kModeNLG));
        REQUIRE(reconstruct(ex) == x);
    }
}

TEST_CASE("corrupt_sequential") {
    const TokenSeq t = iota_seq(10);
    const CorruptedExample ex = corrupt_sequential_at(t, 6);
    CHECK(ex.inputs == TokenSeq{vocab::kModeS2S, 0, 1, 2, 3, 4, 5});
    CHECK(ex.targets == TokenSeq{6, 7, 8, 9, vocab::kEos});
    CHECK(reconstruct(ex) == t);

    Rng rng(4);
    const CorruptedExample two = corrupt_sequential({5, 6}, rng);
    CHECK(two.inputs == TokenSeq{vocab::kModeS2S, 5});
    CHECK(two.targets == TokenSeq{6, vocab::kEos});
    CHECK_THROWS_AS(corrupt_sequential({5}, rng), Error);
    CHECK_THROWS_AS(corrupt_sequential_at(t, 0), Error);
    CHECK_THROWS_AS(corrupt_sequential_at(t, 10), Error);

    double sum = 0;
    const TokenSeq hundred = iota_seq(100);
    for (int i = 0; i < 10000; ++i) sum += double(corrupt_sequential(hundred, rng).inputs.size() - 1);
    const double mean_u = sum / 10000;
    CHECK(mean_u >= 48);
    CHECK(mean_u <= 52);
}

TEST_CASE("causal_example is a one-token prefix without mode") {
    const CorruptedExample ex = causal_example({7, 8, 9});
    CHECK(!ex.mode);
    CHECK(ex.inputs == TokenSeq{7});
    CHECK(ex.targets == TokenSeq{8, 9, vocab::kEos});
    CHECK(reconstruct(ex) == TokenSeq{7, 8, 9});
}

TEST_CASE("apply_denoiser options") {
    Rng rng(2);
    const TokenSeq t = iota_seq(12);
    CorruptOptions opts;
    opts.mode_tokens = false;
    opts.s_split = 1;
    const CorruptedExample ex = apply_denoiser(t, DenoiserSpec::sequential(), rng, opts);
    CHECK(ex == causal_example(t));
    opts.s_split = 50;
    CHECK(apply_denoiser(t, DenoiserSpec::sequential(), rng, opts).inputs.size() == 11);
    const CorruptedExample r = apply_denoiser(t, DenoiserSpec::regular(), rng);
    CHECK(r.mode == vocab::kModeNLU);
    CHECK(r.inputs.front() == vocab::kModeNLU);
}

TEST_CASE("reconstruct") {
    const TokenId s0 = vocab::sentinel(0), s1 = vocab::sentinel(1), nlu = vocab::kModeNLU;
    CorruptedExample ex;
    ex.mode = nlu;
    ex.inputs = {nlu, 10, s0, 13};
    ex.targets = {s0, 11, 12, vocab::kEos};
    ex.original_len = 4;
    CHECK(reconstruct(ex) == TokenSeq{10, 11, 12, 13});

    SUBCASE("target missing a sentinel present in inputs") {
        ex.inputs = {nlu, 10, s0, 13, s1, 14};
        ex.original_len = 6;
        CHECK_THROWS_AS(reconstruct(ex), Error);
    }
    SUBCASE("extra target sentinel") {
        ex.targets = {s0, 11, 12, s1, 15, vocab::kEos};
        CHECK_THROWS_AS(reconstruct(ex), Error);
    }
    SUBCASE("out-of-order sentinels") {
        ex.inputs = {nlu, 10, s1, 13};
        ex.targets = {s1, 11, vocab::kEos};
        CHECK_THROWS_AS(reconstruct(ex), Error);
    }
    SUBCASE("length disagrees") {
        ex.original_len = 5;
        CHECK_THROWS_AS(reconstruct(ex), Error);
    }
    SUBCASE("missing eos") {
        ex.targets.pop_back();
        CHECK_THROWS_AS(reconstruct(ex), Error);
    }
}

TEST_CASE("property: every denoiser reconstructs") {
    Rng rng(31);
    const DenoiserSpec specs[] = {DenoiserSpec::regular(), DenoiserSpec::extreme({0.15, 32}),
                                  DenoiserSpec::extreme({0.5, 3}), DenoiserSpec::sequential()};
    for (const DenoiserSpec& spec : specs) {
        for (int i = 0; i < 1000; ++i) {
            const TokenSeq x = test::random_bytes(rng, static_cast<std::size_t>(rng.uniform_int(2, 256)));
            CorruptedExample ex;
            try {
                ex = apply_denoiser(x, spec, rng);
            } catch (const Error& e) {
                REQUIRE(e.code() == ErrorCode::input_too_short);
                continue;
            }
            REQUIRE(ex.inputs.front() == spec.mode_token);
            // Sentinels appear once each in ascending order.
            int next = 0;
            for (TokenId t : ex.inputs)
                if (vocab::is_sentinel(t)) REQUIRE(vocab::sentinel_index(t) == next++);
            if (spec.kind == DenoiserKind::S) REQUIRE(next == 0);
            REQUIRE(reconstruct(ex) == x);
        }
    }
}
