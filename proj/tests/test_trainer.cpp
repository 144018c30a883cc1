#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "ul2r/checkpoint.hpp"
#include "ul2r/errors.hpp"
#include "ul2r/eval.hpp"
#include "ul2r/trainer.hpp"

using namespace ul2r;

namespace {

Corpus small_corpus() {
    return corpus_from_lines({"the cat sat on the mat", "a dog ran far away", "x", "", "birds sing at dawn and dusk",
                              "one two three four five"},
                             1.0, 0);
}

ModelConfig small_model() {
    ModelConfig m;
    m.d_model = 16;
    m.n_layers = 1;
    m.n_heads = 2;
    m.d_ff = 32;
    m.max_len = 32;
    return m;
}

TrainConfig causal_cfg(std::size_t steps) {
    TrainConfig c;
    c.phase = Phase::causal;
    c.steps = steps;
    c.batch_size = 4;
    c.l_in = 16;
    c.l_tgt = 16;
    c.lr_max = 1e-3;
    c.lr_min = 1e-3;
    c.schedule = Schedule::constant;
    c.seed = 5;
    c.model = small_model();
    return c;
}

} // namespace

TEST_CASE("lr_at") {
    CHECK(lr_at(0, 100, 1e-4, 1e-6, Schedule::cosine) == 1e-4);
    CHECK(lr_at(100, 100, 1e-4, 1e-6, Schedule::cosine) == 1e-6);
    CHECK(std::abs(lr_at(50, 100, 1e-4, 1e-6, Schedule::cosine) - 5.05e-5) < 1e-12);
    CHECK(lr_at(37, 100, 1e-4, 1e-6, Schedule::constant) == 1e-4);
    CHECK_THROWS_AS(lr_at(0, 0, 1e-4, 1e-6, Schedule::cosine), Error);
    CHECK_THROWS_AS(lr_at(101, 100, 1e-4, 1e-6, Schedule::cosine), Error);
    double prev = 1.0;
    for (std::size_t s = 0; s <= 100; ++s) {
        const double lr = lr_at(s, 100, 1e-4, 1e-6, Schedule::cosine);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("token accounting") {
    CHECK(count_tokens(20000, 32, 2048) == 1310720000ULL);
    CHECK(training_flops(1000000, 100000000) == 6e14);
    CHECK(double(count_tokens(20000, 32, 2048)) / 780e9 == doctest::Approx(0.00168).epsilon(1e-3));
}

TEST_CASE("config validation") {
    TrainConfig c = causal_cfg(1);
    c.lr_min = 1e-2;
    CHECK_THROWS_AS(run_phase(c, small_corpus(), nullptr), Error);
    TrainConfig u = causal_cfg(1);
    u.phase = Phase::ul2r;
    u.mixture = MixtureConfig{};
    CHECK_THROWS_AS(run_phase(u, small_corpus(), nullptr), Error);
    TrainConfig m = causal_cfg(1);
    m.mixture = MixtureConfig{};
    CHECK_THROWS_AS(run_phase(m, small_corpus(), nullptr), Error);
}

TEST_CASE("step examples skip short documents and crop long ones") {
    const Corpus corpus = small_corpus();
    TrainConfig c = causal_cfg(1);
    c.l_in = 6;
    c.l_tgt = 8;
    for (std::size_t step = 0; step < 20; ++step) {
        for (const CorruptedExample& ex : step_examples(c, corpus, step)) {
            CHECK(ex.original_len >= 2);
            CHECK(ex.original_len <= 5);
        }
    }
}

TEST_CASE("training is deterministic and reduces loss") {
    const Corpus corpus = small_corpus();
    const TrainResult a = run_phase(causal_cfg(30), corpus, nullptr);
    const TrainResult b = run_phase(causal_cfg(30), corpus, nullptr);
    CHECK(a.log == b.log);
    CHECK(bitwise_equal(a.checkpoint, b.checkpoint));
    CHECK(a.log.back().loss < a.log.front().loss);
    CHECK(a.checkpoint.header.tokens == count_tokens(30, 4, 32));
    CHECK(a.checkpoint.header.phase == "causal");
    CHECK(a.log.back().flops == training_flops(small_model(), a.checkpoint.header.tokens));
}

TEST_CASE("ul2r with an S-only, prefix-1, mode-less mixture reproduces causal training") {
    const Corpus corpus = small_corpus();
    const Checkpoint init = initial_checkpoint(small_model(), 5);

    TrainConfig causal = causal_cfg(12);
    const TrainResult a = run_phase(causal, corpus, &init);

    TrainConfig ul2r = causal;
    ul2r.phase = Phase::ul2r;
    MixtureConfig mix;
    mix.weight_s = 1;
    mix.weight_r = 0;
    mix.weight_x = 0;
    ul2r.mixture = mix;
    ul2r.corrupt.mode_tokens = false;
    ul2r.corrupt.s_split = 1;
    const TrainResult b = run_phase(ul2r, corpus, &init);

    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.checkpoint.params.w_out == b.checkpoint.params.w_out);
}

TEST_CASE("ul2r continues cumulative accounting and lineage") {
    const Corpus corpus = small_corpus();
    const TrainResult a = run_phase(causal_cfg(5), corpus, nullptr);
    TrainConfig u = causal_cfg(3);
    u.phase = Phase::ul2r;
    u.mixture = MixtureConfig{};
    u.schedule = Schedule::cosine;
    u.lr_max = 1e-4;
    u.lr_min = 1e-6;
    const TrainResult b = run_phase(u, corpus, &a.checkpoint);
    CHECK(b.checkpoint.header.tokens == count_tokens(8, 4, 32));
    CHECK(b.checkpoint.header.lineage == "causal/ul2r");
    CHECK(b.checkpoint.header.total_steps == 8);
    CHECK(b.log.front().lr == 1e-4);
    CHECK(b.log.back().lr == 1e-6);
    CHECK(b.log.front().flops > a.log.back().flops);
}

TEST_CASE("zero steps returns the source unchanged") {
    const Corpus corpus = small_corpus();
    const TrainResult a = run_phase(causal_cfg(3), corpus, nullptr);
    TrainConfig u = causal_cfg(0);
    u.phase = Phase::ul2r;
    u.mixture = MixtureConfig{};
    const TrainResult b = run_phase(u, corpus, &a.checkpoint);
    CHECK(b.log.empty());
    CHECK(a.checkpoint.params.tok_emb == b.checkpoint.params.tok_emb);
    CHECK(a.checkpoint.params.layers[0].w1 == b.checkpoint.params.layers[0].w1);
}

TEST_CASE("incompatible vocabulary is rejected") {
    const Corpus corpus = small_corpus();
    Checkpoint c = initial_checkpoint(small_model(), 1);
    c.header.vocab_hash ^= 1;
    TrainConfig u = causal_cfg(1);
    u.phase = Phase::ul2r;
    u.mixture = MixtureConfig{};
    try {
        run_phase(u, corpus, &c);
        FAIL("expected incompatible_vocab");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::incompatible_vocab);
    }
}

TEST_CASE("non-finite parameters abort with diagnostics") {
    Checkpoint c = initial_checkpoint(small_model(), 1);
    c.params.b_out(0, 3) = std::numeric_limits<float>::quiet_NaN();
    TrainConfig u = causal_cfg(2);
    u.phase = Phase::ul2r;
    u.mixture = MixtureConfig{};
    try {
        run_phase(u, small_corpus(), &c);
        FAIL("expected non_finite");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::non_finite);
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("checkpoint save/load") {
    const auto dir = test::tmp_dir("ckpt");
    const TrainResult a = run_phase(causal_cfg(4), small_corpus(), nullptr);
    save_checkpoint(a.checkpoint, dir / "a.ckpt");
    const Checkpoint b = load_checkpoint(dir / "a.ckpt");
    CHECK(bitwise_equal(a.checkpoint, b));
    CHECK(b.header.tokens == a.checkpoint.header.tokens);
    CHECK(serialize_checkpoint(b) == serialize_checkpoint(a.checkpoint));

    const std::string bytes = serialize_checkpoint(a.checkpoint);
    auto code_of = [](const std::string& data) {
        try {
            deserialize_checkpoint(data);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::io;
    };
    CHECK(code_of(bytes.substr(0, bytes.size() - 7)) == ErrorCode::corrupt_checkpoint);
    CHECK(code_of(bytes.substr(0, 30)) == ErrorCode::corrupt_checkpoint);
    CHECK(code_of("JUNK" + bytes.substr(4)) == ErrorCode::corrupt_checkpoint);
    std::string bad_version = bytes;
    bad_version[4] = 9;
    CHECK(code_of(bad_version) == ErrorCode::version_mismatch);
    Checkpoint other = a.checkpoint;
    other.header.vocab_hash ^= 0xff;
    CHECK(code_of(serialize_checkpoint(other)) == ErrorCode::incompatible_vocab);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}
