#include "ul2r/run_config.hpp"

#include <map>

#include "ul2r/errors.hpp"

namespace ul2r {

namespace {

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::string span_params(const SpanParams& p) {
    return "rate=" + fmt(p.rate) + ",mean_span=" + fmt(p.mean_span);
}

SpanParams parse_span_params(const std::string& text) {
    SpanParams p;
    for (const auto& [k, v] : parse_assignments(text)) {
        if (k == "rate") p.rate = parse_double(v);
        else if (k == "mean_span") p.mean_span = parse_double(v);
        else throw Error(ErrorCode::config, "unknown denoiser parameter '" + k + "'");
    }
    return p;
}

} // namespace

KeyValues to_key_values(const RunConfig& c) {
    KeyValues kv;
    kv.set("seed", std::to_string(c.seed));
    kv.set("d_model", fmt(c.model.d_model));
    kv.set("n_layers", fmt(c.model.n_layers));
    kv.set("n_heads", fmt(c.model.n_heads));
    kv.set("d_ff", fmt(c.model.d_ff));
    kv.set("max_len", fmt(c.model.max_len));
    kv.set("l_in", fmt(c.l_in));
    kv.set("l_tgt", fmt(c.l_tgt));
    kv.set("pad_prefix_first", fmt(c.pad_prefix_first));
    kv.set("split_fraction", fmt(c.split_fraction));
    kv.set("pretrain_steps", fmt(c.pretrain_steps));
    kv.set("pretrain_batch_size", fmt(c.pretrain_batch_size));
    kv.set("pretrain_lr", fmt(c.pretrain_lr));
    kv.set("ul2r_steps", fmt(c.ul2r_steps));
    kv.set("ul2r_batch_size", fmt(c.ul2r_batch_size));
    kv.set("lr_max", fmt(c.lr_max));
    kv.set("lr_min", fmt(c.lr_min));
    kv.set("schedule", schedule_name(c.schedule));
    kv.set("mixture", "S=" + fmt(c.mixture.weight_s) + ",R=" + fmt(c.mixture.weight_r) + ",X=" + fmt(c.mixture.weight_x));
    kv.set("x_variants", "long=" + fmt(c.mixture.x_long_weight) + ",high=" + fmt(c.mixture.x_high_weight));
    kv.set("r_denoiser", span_params(c.mixture.r_params));
    kv.set("x_long_denoiser", span_params(c.mixture.x_long_params));
    kv.set("x_high_denoiser", span_params(c.mixture.x_high_params));
    kv.set("mode_tokens", fmt(c.corrupt.mode_tokens));
    kv.set("s_split", fmt(c.corrupt.s_split));
    kv.set("adam_beta1", fmt(c.adam.beta1));
    kv.set("adam_beta2", fmt(c.adam.beta2));
    kv.set("adam_eps", fmt(c.adam.eps));
    kv.set("grad_clip", fmt(c.grad_clip));
    kv.set("paper.l_in", fmt(PaperPreset::l_in));
    kv.set("paper.l_tgt", fmt(PaperPreset::l_tgt));
    kv.set("paper.steps", fmt(PaperPreset::steps));
    kv.set("paper.batch_size", fmt(PaperPreset::batch_size));
    kv.set("paper.lr_max", fmt(PaperPreset::lr_max));
    kv.set("paper.lr_min", fmt(PaperPreset::lr_min));
    kv.set("paper.pretrain_tokens", fmt(PaperPreset::pretrain_tokens));
    return kv;
}

RunConfig run_config_from(const KeyValues& kv) {
    RunConfig c;
    for (const auto& [key, value] : kv.entries()) {
        if (key.starts_with("paper.")) continue;
        auto size = [&] {
            const std::int64_t v = parse_int(value);
            if (v < 0) throw Error(ErrorCode::config, "'" + key + "' must be non-negative");
            return static_cast<std::size_t>(v);
        };
        if (key == "seed") c.seed = kv.get_u64(key, 0);
        else if (key == "d_model") c.model.d_model = static_cast<int>(parse_int(value));
        else if (key == "n_layers") c.model.n_layers = static_cast<int>(parse_int(value));
        else if (key == "n_heads") c.model.n_heads = static_cast<int>(parse_int(value));
        else if (key == "d_ff") c.model.d_ff = static_cast<int>(parse_int(value));
        else if (key == "max_len") c.model.max_len = static_cast<int>(parse_int(value));
        else if (key == "l_in") c.l_in = size();
        else if (key == "l_tgt") c.l_tgt = size();
        else if (key == "pad_prefix_first") c.pad_prefix_first = parse_bool(value);
        else if (key == "split_fraction") c.split_fraction = parse_double(value);
        else if (key == "pretrain_steps") c.pretrain_steps = size();
        else if (key == "pretrain_batch_size") c.pretrain_batch_size = size();
        else if (key == "pretrain_lr") c.pretrain_lr = parse_double(value);
        else if (key == "ul2r_steps") c.ul2r_steps = size();
        else if (key == "ul2r_batch_size") c.ul2r_batch_size = size();
        else if (key == "lr_max") c.lr_max = parse_double(value);
        else if (key == "lr_min") c.lr_min = parse_double(value);
        else if (key == "schedule") c.schedule = parse_schedule(value);
        else if (key == "mixture") {
            std::map<std::string, double> w;
            for (const auto& [k, v] : parse_assignments(value)) w[k] = parse_double(v);
            for (const auto& [k, v] : w) {
                if (k != "S" && k != "R" && k != "X") throw Error(ErrorCode::config, "unknown mixture entry '" + k + "'");
            }
            c.mixture.weight_s = w["S"];
            c.mixture.weight_r = w["R"];
            c.mixture.weight_x = w["X"];
        } else if (key == "x_variants") {
            std::map<std::string, double> w;
            for (const auto& [k, v] : parse_assignments(value)) w[k] = parse_double(v);
            c.mixture.x_long_weight = w["long"];
            c.mixture.x_high_weight = w["high"];
        } else if (key == "r_denoiser") c.mixture.r_params = parse_span_params(value);
        else if (key == "x_long_denoiser") c.mixture.x_long_params = parse_span_params(value);
        else if (key == "x_high_denoiser") c.mixture.x_high_params = parse_span_params(value);
        else if (key == "mode_tokens") c.corrupt.mode_tokens = parse_bool(value);
        else if (key == "s_split") c.corrupt.s_split = size();
        else if (key == "adam_beta1") c.adam.beta1 = parse_double(value);
        else if (key == "adam_beta2") c.adam.beta2 = parse_double(value);
        else if (key == "adam_eps") c.adam.eps = parse_double(value);
        else if (key == "grad_clip") c.grad_clip = parse_double(value);
        else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
    }
    c.mixture.validate();
    return c;
}

std::string dump_config(const RunConfig& cfg) { return to_key_values(cfg).dump(); }

TrainConfig phase_config(const RunConfig& c, Phase phase) {
    TrainConfig t;
    t.phase = phase;
    t.l_in = c.l_in;
    t.l_tgt = c.l_tgt;
    t.pad_prefix_first = c.pad_prefix_first;
    t.adam = c.adam;
    t.grad_clip = c.grad_clip;
    t.seed = c.seed;
    t.model = c.model;
    if (phase == Phase::causal) {
        t.steps = c.pretrain_steps;
        t.batch_size = c.pretrain_batch_size;
        t.lr_max = c.pretrain_lr;
        t.lr_min = c.pretrain_lr;
        t.schedule = Schedule::constant;
    } else {
        t.steps = c.ul2r_steps;
        t.batch_size = c.ul2r_batch_size;
        t.lr_max = c.lr_max;
        t.lr_min = c.lr_min;
        t.schedule = c.schedule;
        t.mixture = c.mixture;
        t.corrupt = c.corrupt;
    }
    return t;
}

} // namespace ul2r
