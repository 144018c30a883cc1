#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ul2r/errors.hpp"
#include "ul2r/model.hpp"

using namespace ul2r;

namespace {

ModelConfig tiny(int vocab = vocab::kSize) {
    ModelConfig c;
    c.vocab = vocab;
    c.d_model = 8;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 12;
    c.max_len = 24;
    return c;
}

std::vector<CorruptedExample> random_examples(Rng& rng, int n, std::size_t l_in, std::size_t l_tgt, int vocab) {
    std::vector<CorruptedExample> out;
    for (int k = 0; k < n; ++k) {
        CorruptedExample ex;
        const std::size_t ni = std::size_t(rng.uniform_int(1, std::int64_t(l_in)));
        const std::size_t nt = std::size_t(rng.uniform_int(1, std::int64_t(l_tgt)));
        for (std::size_t i = 0; i < ni; ++i) ex.inputs.push_back(TokenId(rng.uniform_int(0, vocab - 1)));
        for (std::size_t i = 0; i < nt; ++i) ex.targets.push_back(TokenId(rng.uniform_int(0, vocab - 1)));
        out.push_back(ex);
    }
    return out;
}

// Closed-form count written out per tensor.
std::size_t count_by_tensor(const ModelConfig& c) {
    const std::size_t V = c.vocab, L = c.max_len, d = c.d_model, f = c.d_ff;
    const std::size_t per_layer = 2 * d            // ln1
                                  + 4 * (d * d + d)  // q, k, v, o
                                  + 2 * d            // ln2
                                  + d * f + f + f * d + d;
    return V * d + L * d + c.n_layers * per_layer + 2 * d + d * V + V;
}

} // namespace

TEST_CASE("parameter count") {
    ModelConfig c;
    c.d_model = 64;
    c.n_layers = 2;
    c.n_heads = 4;
    c.d_ff = 256;
    CHECK(c.param_count() == count_by_tensor(c));
    Params<float> p = init_params<float>(c, 1);
    std::size_t total = 0;
    for (const auto& nt : named_tensors(p)) total += std::size_t(nt.tensor->size());
    CHECK(total == c.param_count());
    c.n_heads = 5;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("init is deterministic and finite") {
    const ModelConfig c = tiny();
    Params<double> a = init_params<double>(c, 3), b = init_params<double>(c, 3);
    auto ta = named_tensors(a), tb = named_tensors(b);
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i].tensor == *tb[i].tensor);
    for (std::uint64_t s = 0; s < 10; ++s) CHECK(all_finite(init_params<float>(c, s)));
    CHECK(a.layers[0].ln1_g.isOnes());
}

TEST_CASE("uniform logits give ln V") {
    const ModelConfig c = tiny(100);
    Params<double> p = init_params<double>(c, 1);
    p.w_out.setZero();
    p.b_out.setZero();
    Rng rng(1);
    const PackedBatch b = pack_examples(random_examples(rng, 3, 5, 5, 100), 5, 5);
    const LossResult<double> r = forward_loss(p, b, prefix_lm_mask(b));
    CHECK(r.loss == doctest::Approx(4.60517).epsilon(1e-6));
}

TEST_CASE("empty loss mask is an error") {
    const ModelConfig c = tiny();
    const Params<double> p = init_params<double>(c, 1);
    CorruptedExample ex;
    ex.inputs = {1, 2, 3};
    const PackedBatch b = pack_examples({ex}, 4, 2);
    CHECK_THROWS_AS(forward_loss(p, b, prefix_lm_mask(b)), Error);
}

TEST_CASE("finite differences match the analytic gradient") {
    Rng rng(77);
    for (int cfg_i = 0; cfg_i < 3; ++cfg_i) {
        ModelConfig c = tiny(40);
        c.n_layers = 1 + cfg_i % 2;
        const Params<double> p = init_params<double>(c, 100 + cfg_i);
        const PackedBatch b = pack_examples(random_examples(rng, 3, 6, 5, 40), 6, 5);
        const AttentionMask m = prefix_lm_mask(b);
        Params<double> g = grad(p, b, m);
        Params<double> q = p;
        auto qt = named_tensors(q);
        auto gt = named_tensors(g);
        for (int k = 0; k < 20; ++k) {
            const std::size_t t = std::size_t(rng.uniform_int(0, std::int64_t(qt.size()) - 1));
            auto& tens = *qt[t].tensor;
            const Eigen::Index idx = Eigen::Index(rng.uniform_int(0, tens.size() - 1));
            const double orig = tens.data()[idx];
            tens.data()[idx] = orig + 1e-5;
            const double lp = forward_loss(q, b, m).loss;
            tens.data()[idx] = orig - 1e-5;
            const double lm = forward_loss(q, b, m).loss;
            tens.data()[idx] = orig;
            const double fd = (lp - lm) / 2e-5;
            const double an = gt[t].tensor->data()[idx];
            const double rel = std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an));
            INFO(qt[t].name << "[" << idx << "] fd=" << fd << " an=" << an);
            CHECK((rel < 1e-4 || std::abs(fd - an) < 1e-9));
        }
    }
}

TEST_CASE("unused embedding rows get zero gradient; grads are deterministic") {
    const ModelConfig c = tiny(40);
    const Params<double> p = init_params<double>(c, 4);
    CorruptedExample ex;
    ex.inputs = {1, 2};
    ex.targets = {3, 4};
    const PackedBatch b = pack_examples({ex}, 2, 2);
    const AttentionMask m = prefix_lm_mask(b);
    const Params<double> g1 = grad(p, b, m), g2 = grad(p, b, m);
    CHECK(g1.tok_emb.row(30).isZero(0));
    CHECK(!g1.tok_emb.row(1).isZero(0));
    CHECK(g1.tok_emb == g2.tok_emb);
    CHECK(g1.w_out == g2.w_out);
}

TEST_CASE("log-probs normalize") {
    const ModelConfig c = tiny();
    const Params<float> p = init_params<float>(c, 2);
    const TokenSeq toks{5, 6, 7, 8, 9};
    const Tensor<double> lp = row_log_probs(p, toks, single_segment_mask(5, 2));
    for (Eigen::Index i = 0; i < lp.rows(); ++i) CHECK(lp.row(i).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("causality probe: edits only reach positions allowed to see them") {
    Rng rng(12);
    const ModelConfig c = tiny(50);
    const Params<double> p = init_params<double>(c, 9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = std::size_t(rng.uniform_int(3, 20));
        const std::size_t prefix = std::size_t(rng.uniform_int(1, std::int64_t(n)));
        TokenSeq toks(n);
        for (TokenId& t : toks) t = TokenId(rng.uniform_int(0, 49));
        const auto mask = single_segment_mask(n, prefix);
        const Tensor<double> base = row_log_probs(p, toks, mask);
        const std::size_t j = std::size_t(rng.uniform_int(0, std::int64_t(n) - 1));
        TokenSeq edited = toks;
        edited[j] = (edited[j] + 1) % 50;
        const Tensor<double> after = row_log_probs(p, edited, mask);
        for (std::size_t i = 0; i < n; ++i) {
            const bool sees = mask[i * n + j] != 0;
            const double diff = (base.row(Eigen::Index(i)) - after.row(Eigen::Index(i))).cwiseAbs().maxCoeff();
            if (!sees) REQUIRE(diff == 0.0);
        }
    }
}

TEST_CASE("loss is invariant to row order and pad content") {
    Rng rng(21);
    const ModelConfig c = tiny(60);
    const Params<double> p = init_params<double>(c, 5);
    PackedBatch b = pack_examples(random_examples(rng, 6, 7, 5, 60), 7, 5);
    REQUIRE(b.row_count() >= 2);
    const double base = forward_loss(p, b, prefix_lm_mask(b)).loss;

    PackedBatch rev = b;
    std::reverse(rev.rows.begin(), rev.rows.end());
    std::reverse(rev.segments.begin(), rev.segments.end());
    std::reverse(rev.loss_mask.begin(), rev.loss_mask.end());
    std::reverse(rev.pad_counts.begin(), rev.pad_counts.end());
    CHECK(forward_loss(p, rev, prefix_lm_mask(rev)).loss == doctest::Approx(base).epsilon(1e-12));

    PackedBatch junk = b;
    for (std::size_t r = 0; r < junk.row_count(); ++r)
        for (std::size_t i = junk.used_len(r); i < junk.row_len; ++i) junk.rows[r][i] = TokenId(rng.uniform_int(0, 59));
    CHECK(forward_loss(p, junk, prefix_lm_mask(b)).loss == base);
}

TEST_CASE("a packed segment scores exactly as it does alone") {
    Rng rng(31);
    const ModelConfig c = tiny(60);
    const Params<double> p = init_params<double>(c, 7);
    const PackedBatch b = pack_examples(random_examples(rng, 8, 7, 5, 60), 7, 5);
    const LossResult<double> packed = forward_loss(p, b, prefix_lm_mask(b));
    std::size_t checked = 0, offset_segments = 0;
    for (std::size_t r = 0; r < b.row_count(); ++r) {
        for (const Segment& s : b.segments[r]) {
            offset_segments += s.start > 0;
            const TokenSeq alone(b.rows[r].begin() + std::ptrdiff_t(s.start), b.rows[r].begin() + std::ptrdiff_t(s.end));
            const Tensor<double> lp = row_log_probs(p, alone, single_segment_mask(alone.size(), s.prefix_len));
            for (std::size_t j = s.start + s.prefix_len; j < s.end; ++j) {
                CHECK(packed.token_logprobs[r][j] == doctest::Approx(lp(Eigen::Index(j - s.start - 1), b.rows[r][j])).epsilon(1e-10));
                ++checked;
            }
        }
    }
    CHECK(checked == packed.scored);
    CHECK(offset_segments > 0);
}

TEST_CASE("causal mask equals prefix-LM mask with a one-token prefix") {
    Rng rng(5);
    const ModelConfig c = tiny(30);
    const Params<double> p = init_params<double>(c, 6);
    for (int trial = 0; trial < 10; ++trial) {
        CorruptedExample ex;
        ex.inputs = {TokenId(rng.uniform_int(0, 29))};
        ex.targets = {TokenId(rng.uniform_int(0, 29)), TokenId(rng.uniform_int(0, 29))};
        const PackedBatch b = pack_examples({ex}, 1, 2);
        const LossResult<double> a = forward_loss(p, b, causal_mask(b));
        const LossResult<double> q = forward_loss(p, b, prefix_lm_mask(b));
        CHECK(a.loss == q.loss);
    }
}

TEST_CASE("float and double agree") {
    Rng rng(3);
    const ModelConfig c = tiny();
    const Params<double> pd = init_params<double>(c, 8);
    const Params<float> pf = cast_params<float>(pd);
    const PackedBatch b = pack_examples(random_examples(rng, 4, 6, 6, 361), 6, 6);
    const AttentionMask m = prefix_lm_mask(b);
    CHECK(forward_loss(pf, b, m).loss == doctest::Approx(forward_loss(pd, b, m).loss).epsilon(1e-5));
}
