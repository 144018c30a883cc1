#include "ul2r/trainer.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ul2r/errors.hpp"
#include "ul2r/eval.hpp"
#include "ul2r/packer.hpp"
#include "ul2r/rng.hpp"

namespace ul2r {

const char* phase_name(Phase phase) { return phase == Phase::causal ? "causal" : "ul2r"; }

Phase parse_phase(const std::string& name) {
    if (name == "causal") return Phase::causal;
    if (name == "ul2r") return Phase::ul2r;
    throw Error(ErrorCode::config, "unknown phase '" + name + "'");
}

const char* schedule_name(Schedule schedule) { return schedule == Schedule::cosine ? "cosine" : "constant"; }

Schedule parse_schedule(const std::string& name) {
    if (name == "cosine") return Schedule::cosine;
    if (name == "constant") return Schedule::constant;
    throw Error(ErrorCode::config, "unknown schedule '" + name + "'");
}

double lr_at(std::size_t step, std::size_t total, double lr_max, double lr_min, Schedule schedule) {
    if (total == 0) throw Error(ErrorCode::config, "schedule length must be positive");
    if (step > total) throw Error(ErrorCode::precondition, "step beyond schedule length");
    if (schedule == Schedule::constant) return lr_max;
    if (step == total) return lr_min;
    const double progress = static_cast<double>(step) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate(bool has_source) const {
    if (!(lr_max >= lr_min && lr_min > 0.0)) throw Error(ErrorCode::config, "need lr_max >= lr_min > 0");
    if (batch_size == 0) throw Error(ErrorCode::config, "batch_size must be positive");
    if (l_in < 1 || l_tgt < 1) throw Error(ErrorCode::config, "l_in and l_tgt must be positive");
    if (phase == Phase::causal && mixture) {
        throw Error(ErrorCode::config, "the causal phase does not take a denoiser mixture");
    }
    if (phase == Phase::ul2r) {
        if (!has_source) throw Error(ErrorCode::config, "the ul2r phase requires a source checkpoint");
        if (!mixture) throw Error(ErrorCode::config, "the ul2r phase requires a denoiser mixture");
        mixture->validate();
    }
    if (!has_source) {
        model.validate();
        if (static_cast<std::size_t>(model.max_len) < row_len()) {
            throw Error(ErrorCode::config, "model max_len is shorter than l_in + l_tgt");
        }
    }
}

namespace {

// Tags separating the per-example random streams.
constexpr std::uint64_t kDocStream = 1;
constexpr std::uint64_t kCorruptStream = 2;

TokenSeq pick_window(const TokenSeq& doc, std::size_t max_len, Rng& rng) {
    if (doc.size() <= max_len) return doc;
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(doc.size() - max_len)));
    return TokenSeq(doc.begin() + static_cast<std::ptrdiff_t>(start),
                    doc.begin() + static_cast<std::ptrdiff_t>(start + max_len));
}

template <typename T>
double global_norm(Params<T>& g) {
    double sq = 0.0;
    for (const auto& nt : named_tensors(g)) sq += static_cast<double>(nt.tensor->squaredNorm());
    return std::sqrt(sq);
}

} // namespace

std::vector<CorruptedExample> step_examples(const TrainConfig& cfg, const Corpus& corpus, std::size_t step) {
    const std::vector<std::size_t> eligible = trainable_indices(corpus.train);
    if (eligible.empty()) {
        throw Error(ErrorCode::empty_input, "corpus has no training documents of length >= 2");
    }
    // Longest document that fits every objective's input and target budgets.
    const std::size_t max_doc = std::max<std::size_t>(2, std::min(cfg.l_in, cfg.l_tgt) - 1);

    std::vector<CorruptedExample> out;
    out.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        Rng doc_rng(derive_seed(cfg.seed, {step, i, kDocStream}));
        const std::size_t doc_index =
            eligible[static_cast<std::size_t>(doc_rng.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))];
        const TokenSeq doc = pick_window(corpus.train[doc_index].tokens, max_doc, doc_rng);

        Rng corrupt_rng(derive_seed(cfg.seed, {step, i, kCorruptStream}));
        if (cfg.phase == Phase::causal) {
            out.push_back(causal_example(doc));
        } else {
            const DenoiserSpec spec = sample_denoiser(*cfg.mixture, corrupt_rng);
            out.push_back(apply_denoiser(doc, spec, corrupt_rng, cfg.corrupt));
        }
    }
    return out;
}

TrainResult run_phase(const TrainConfig& cfg, const Corpus& corpus, const Checkpoint* source,
                      const StepCallback& on_step) {
    cfg.validate(source != nullptr);

    TrainResult result;
    Checkpoint& ckpt = result.checkpoint;
    if (source) {
        if (source->header.vocab_hash != vocab::layout_hash()) {
            throw Error(ErrorCode::incompatible_vocab, "source checkpoint vocabulary layout differs from this build");
        }
        if (static_cast<std::size_t>(source->header.model.max_len) < cfg.row_len()) {
            throw Error(ErrorCode::config, "source model max_len is shorter than l_in + l_tgt");
        }
        ckpt = *source;
    } else {
        ckpt = initial_checkpoint(cfg.model, cfg.seed);
    }

    // Each phase starts its optimizer afresh.
    const ModelConfig& mcfg = ckpt.header.model;
    Params<float>& params = ckpt.params;
    Params<float> m = zeros_like<float>(mcfg);
    Params<float> v = zeros_like<float>(mcfg);
    std::uint64_t adam_t = 0;

    const std::size_t n_params = mcfg.param_count();
    const std::uint64_t tokens_per_step = count_tokens(1, cfg.batch_size, cfg.row_len());
    std::uint64_t tokens = ckpt.header.tokens;
    const std::size_t schedule_len = std::max<std::size_t>(cfg.steps > 0 ? cfg.steps - 1 : 1, 1);
    PackOptions pack_opts;
    pack_opts.pad_prefix_first = cfg.pad_prefix_first;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const std::vector<CorruptedExample> examples = step_examples(cfg, corpus, step);
        const PackedBatch batch = pack_examples(examples, cfg.l_in, cfg.l_tgt, pack_opts);
        const AttentionMask mask = prefix_lm_mask(batch);
        GradResult<float> gr = loss_and_grad(params, batch, mask);
        if (!std::isfinite(gr.loss) || !all_finite(gr.grads)) {
            std::ostringstream os;
            os << phase_name(cfg.phase) << " step " << step + 1 << ": non-finite loss " << gr.loss << " over "
               << gr.scored << " target tokens in " << batch.row_count() << " rows";
            throw Error(ErrorCode::non_finite, os.str());
        }

        const double lr = lr_at(std::min(step, schedule_len), schedule_len, cfg.lr_max, cfg.lr_min, cfg.schedule);
        float clip_scale = 1.0f;
        if (cfg.grad_clip > 0.0) {
            const double norm = global_norm(gr.grads);
            if (norm > cfg.grad_clip) clip_scale = static_cast<float>(cfg.grad_clip / norm);
        }

        ++adam_t;
        const auto b1 = static_cast<float>(cfg.adam.beta1);
        const auto b2 = static_cast<float>(cfg.adam.beta2);
        const auto eps = static_cast<float>(cfg.adam.eps);
        const auto bc1 = static_cast<float>(1.0 - std::pow(cfg.adam.beta1, static_cast<double>(adam_t)));
        const auto bc2 = static_cast<float>(1.0 - std::pow(cfg.adam.beta2, static_cast<double>(adam_t)));
        const auto lr_f = static_cast<float>(lr);
        auto pt = named_tensors(params);
        auto gt = named_tensors(gr.grads);
        auto mt = named_tensors(m);
        auto vt = named_tensors(v);
        for (std::size_t k = 0; k < pt.size(); ++k) {
            float* p = pt[k].tensor->data();
            const float* g = gt[k].tensor->data();
            float* mm = mt[k].tensor->data();
            float* vv = vt[k].tensor->data();
            const Eigen::Index n = pt[k].tensor->size();
            for (Eigen::Index i = 0; i < n; ++i) {
                const float gi = g[i] * clip_scale;
                mm[i] = b1 * mm[i] + (1.0f - b1) * gi;
                vv[i] = b2 * vv[i] + (1.0f - b2) * gi * gi;
                const float mhat = mm[i] / bc1;
                const float vhat = vv[i] / bc2;
                p[i] -= lr_f * mhat / (std::sqrt(vhat) + eps);
            }
        }

        tokens += tokens_per_step;
        MetricRecord rec{step + 1, cfg.phase, lr, gr.loss, tokens, training_flops(n_params, tokens)};
        result.log.push_back(rec);
        if (on_step) on_step(rec);
    }

    CheckpointHeader& h = ckpt.header;
    h.phase = phase_name(cfg.phase);
    h.phase_steps = cfg.steps;
    h.total_steps += cfg.steps;
    h.tokens = tokens;
    h.adam_step = adam_t;
    h.lineage = h.lineage.empty() ? h.phase : h.lineage + "/" + h.phase;
    if (cfg.steps > 0) {
        ckpt.adam_m = std::move(m);
        ckpt.adam_v = std::move(v);
    }
    return result;
}

} // namespace ul2r
