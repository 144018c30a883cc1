#include "ul2r/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ul2r/config.hpp"
#include "ul2r/denoiser.hpp"
#include "ul2r/errors.hpp"
#include "ul2r/inference.hpp"
#include "ul2r/packer.hpp"
#include "ul2r/rng.hpp"

namespace ul2r {

std::uint64_t count_tokens(std::uint64_t steps, std::uint64_t batch, std::uint64_t row_len) {
    return steps * batch * row_len;
}

double training_flops(std::size_t param_count, std::uint64_t tokens) {
    return 6.0 * static_cast<double>(param_count) * static_cast<double>(tokens);
}

double training_flops(const ModelConfig& cfg, std::uint64_t tokens) {
    return training_flops(cfg.param_count(), tokens);
}

double aggregate_mean(std::span<const double> scores) {
    if (scores.empty()) throw Error(ErrorCode::empty_input, "cannot aggregate zero task scores");
    double sum = 0.0;
    for (double s : scores) sum += s;
    return sum / static_cast<double>(scores.size());
}

namespace {

CorruptedExample loss_example(const Task& task, const TokenSeq& doc, std::size_t index) {
    Rng rng(derive_seed(task.seed, {index}));
    switch (task.objective) {
    case LossObjective::causal: return causal_example(doc);
    case LossObjective::s: return apply_denoiser(doc, DenoiserSpec::sequential(), rng);
    case LossObjective::r: return apply_denoiser(doc, DenoiserSpec::regular(), rng);
    case LossObjective::x: return apply_denoiser(doc, DenoiserSpec::extreme({0.15, 32.0}), rng);
    }
    return causal_example(doc);
}

} // namespace

template <typename T>
TaskScore evaluate_task(const Params<T>& params, const Task& task) {
    TaskScore score{task.name, task.kind, 0.0, 0};
    switch (task.kind) {
    case TaskKind::rank: {
        if (task.rank_items.empty()) throw Error(ErrorCode::empty_input, "task '" + task.name + "' has no items");
        std::size_t correct = 0;
        for (const RankItem& item : task.rank_items) {
            const TokenSeq prefix = encode(item.prefix);
            std::size_t best = 0;
            double best_ll = -INFINITY;
            for (std::size_t c = 0; c < item.candidates.size(); ++c) {
                const double ll = loglikelihood(params, prefix, encode(item.candidates[c]), task.mode);
                if (ll > best_ll) {
                    best_ll = ll;
                    best = c;
                }
            }
            if (best == item.answer) ++correct;
        }
        score.count = task.rank_items.size();
        score.value = static_cast<double>(correct) / static_cast<double>(score.count);
        break;
    }
    case TaskKind::infill: {
        if (task.infill_items.empty()) throw Error(ErrorCode::empty_input, "task '" + task.name + "' has no items");
        std::size_t correct = 0;
        for (const InfillItem& item : task.infill_items) {
            const InfillPrompt prompt = parse_infill_prompt(item.prompt, task.mode);
            bool match = false;
            try {
                const InfillResult res = infill(params, prompt, task.max_tokens);
                match = res.fills.size() == item.fills.size();
                for (std::size_t k = 0; match && k < item.fills.size(); ++k) {
                    match = decode(res.fills[k]) == item.fills[k];
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::parse) throw;
            }
            if (match) ++correct;
        }
        score.count = task.infill_items.size();
        score.value = static_cast<double>(correct) / static_cast<double>(score.count);
        break;
    }
    case TaskKind::loss: {
        double total = 0.0;
        std::size_t scored = 0;
        for (std::size_t i = 0; i < task.documents.size(); ++i) {
            const TokenSeq doc = encode(task.documents[i]);
            if (doc.size() < 2) continue;
            const CorruptedExample ex = loss_example(task, doc, i);
            const PackedBatch batch = pack_examples({ex}, ex.inputs.size(), ex.targets.size());
            const LossResult<T> lr = forward_loss(params, batch, prefix_lm_mask(batch));
            total += lr.loss * static_cast<double>(lr.scored);
            scored += lr.scored;
        }
        if (scored == 0) throw Error(ErrorCode::empty_input, "task '" + task.name + "' has no scorable documents");
        score.count = scored;
        score.value = total / static_cast<double>(scored);
        break;
    }
    }
    return score;
}

template <typename T>
EvalReport evaluate(const Params<T>& params, const std::vector<Task>& tasks) {
    if (tasks.empty()) throw Error(ErrorCode::empty_input, "no tasks to evaluate");
    EvalReport report;
    std::vector<double> values;
    for (const Task& task : tasks) {
        TaskScore s = evaluate_task(params, task);
        if (task.kind == TaskKind::loss) {
            report.losses.push_back(std::move(s));
        } else {
            values.push_back(s.value);
            report.scores.push_back(std::move(s));
        }
    }
    report.aggregate = values.empty() ? 0.0 : aggregate_mean(values);
    return report;
}

template TaskScore evaluate_task<float>(const Params<float>&, const Task&);
template TaskScore evaluate_task<double>(const Params<double>&, const Task&);
template EvalReport evaluate<float>(const Params<float>&, const std::vector<Task>&);
template EvalReport evaluate<double>(const Params<double>&, const std::vector<Task>&);

namespace {

using nlohmann::json;

const char* kind_name(TaskKind k) {
    switch (k) {
    case TaskKind::rank: return "rank";
    case TaskKind::infill: return "infill";
    case TaskKind::loss: return "loss";
    }
    return "rank";
}

const char* objective_name(LossObjective o) {
    switch (o) {
    case LossObjective::causal: return "causal";
    case LossObjective::s: return "s";
    case LossObjective::r: return "r";
    case LossObjective::x: return "x";
    }
    return "causal";
}

const char* mode_name(std::optional<TokenId> mode) {
    if (!mode) return "none";
    if (*mode == vocab::kModeS2S) return "s2s";
    if (*mode == vocab::kModeNLU) return "nlu";
    return "nlg";
}

} // namespace

std::vector<Task> parse_tasks_json(const std::string& text) {
    std::vector<Task> tasks;
    try {
        const json doc = json::parse(text);
        for (const json& jt : doc.at("tasks")) {
            Task t;
            t.name = jt.at("name").get<std::string>();
            const std::string kind = jt.at("kind").get<std::string>();
            t.mode = parse_mode_flag(jt.value("mode", std::string("none")));
            t.max_tokens = jt.value("max_tokens", std::size_t{32});
            t.seed = jt.value("seed", std::uint64_t{0});
            if (kind == "rank") {
                t.kind = TaskKind::rank;
                for (const json& it : jt.at("items")) {
                    t.rank_items.push_back({it.at("prefix").get<std::string>(),
                                            it.at("candidates").get<std::vector<std::string>>(),
                                            it.at("answer").get<std::size_t>()});
                }
            } else if (kind == "infill") {
                t.kind = TaskKind::infill;
                for (const json& it : jt.at("items")) {
                    t.infill_items.push_back(
                        {it.at("prompt").get<std::string>(), it.at("fills").get<std::vector<std::string>>()});
                }
            } else if (kind == "loss") {
                t.kind = TaskKind::loss;
                const std::string obj = jt.value("objective", std::string("causal"));
                if (obj == "causal") t.objective = LossObjective::causal;
                else if (obj == "s") t.objective = LossObjective::s;
                else if (obj == "r") t.objective = LossObjective::r;
                else if (obj == "x") t.objective = LossObjective::x;
                else throw Error(ErrorCode::config, "unknown loss objective '" + obj + "'");
                t.documents = jt.at("items").get<std::vector<std::string>>();
            } else {
                throw Error(ErrorCode::config, "unknown task kind '" + kind + "'");
            }
            tasks.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string("invalid tasks file: ") + e.what());
    }
    return tasks;
}

std::string tasks_to_json(const std::vector<Task>& tasks) {
    json arr = json::array();
    for (const Task& t : tasks) {
        json jt = json::object();
        jt["name"] = t.name;
        jt["kind"] = kind_name(t.kind);
        jt["mode"] = mode_name(t.mode);
        json items = json::array();
        switch (t.kind) {
        case TaskKind::rank:
            for (const RankItem& it : t.rank_items) {
                items.push_back({{"prefix", it.prefix}, {"candidates", it.candidates}, {"answer", it.answer}});
            }
            break;
        case TaskKind::infill:
            jt["max_tokens"] = t.max_tokens;
            for (const InfillItem& it : t.infill_items) items.push_back({{"prompt", it.prompt}, {"fills", it.fills}});
            break;
        case TaskKind::loss:
            jt["objective"] = objective_name(t.objective);
            jt["seed"] = t.seed;
            items = t.documents;
            break;
        }
        jt["items"] = std::move(items);
        arr.push_back(std::move(jt));
    }
    return json{{"tasks", arr}}.dump(1) + "\n";
}

// Alphanumeric runs outside every slot occurrence, as (offset, length). The
// run at offset 0 is skipped because training never corrupts position 0.
std::vector<std::pair<std::size_t, std::size_t>> template_words(const Document& doc) {
    const std::string& t = doc.text;
    auto in_slot = [&](std::size_t i) {
        for (const SlotOccurrence& s : doc.slots)
            if (i >= s.offset && i < s.offset + s.value.size()) return true;
        return false;
    };
    auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < t.size();) {
        if (!word_char(t[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        bool slot = false;
        while (j < t.size() && word_char(t[j])) slot = in_slot(j++) || slot;
        if (i > 0 && !slot) out.emplace_back(i, j - i);
        i = j;
    }
    return out;
}

std::vector<Task> desk_tasks(const std::vector<Document>& docs, const Grammar& grammar, const DeskTaskOptions& opts) {
    auto make_task = [](std::string name, TaskKind kind, std::optional<TokenId> mode) {
        Task t;
        t.name = std::move(name);
        t.kind = kind;
        t.mode = mode;
        return t;
    };
    Task infill_task = make_task("infill_heldout", TaskKind::infill, vocab::kModeNLU);
    Task rank_task = make_task("rank_heldout", TaskKind::rank, std::nullopt);
    Task loss_task = make_task("causal_loss_heldout", TaskKind::loss, std::nullopt);
    loss_task.objective = LossObjective::causal;
    loss_task.seed = opts.seed;

    std::size_t used = 0;
    for (std::size_t d = 0; d < docs.size() && used < opts.max_items; ++d) {
        const Document& doc = docs[d];
        if (doc.slots.empty()) continue;
        ++used;
        loss_task.documents.push_back(doc.text);
        Rng rng(derive_seed(opts.seed, {d}));

        // Blank one template word; the grammar fixes its text, so the answer
        // is known exactly for any slot assignment.
        const std::vector<std::pair<std::size_t, std::size_t>> words = template_words(doc);
        if (!words.empty()) {
            const auto [at, len] = words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(words.size()) - 1))];
            infill_task.infill_items.push_back(
                {doc.text.substr(0, at) + "<extra_id_0>" + doc.text.substr(at + len), {doc.text.substr(at, len)}});
        }

        std::vector<std::size_t> recoverable;
        for (std::size_t k = 0; k < doc.slots.size(); ++k) {
            for (std::size_t m = 0; m < doc.slots.size(); ++m) {
                if (m != k && doc.slots[m].slot == doc.slots[k].slot) {
                    recoverable.push_back(k);
                    break;
                }
            }
        }

        // Rank: the last occurrence of a repeated slot, continuation to the end of the document.
        const SlotOccurrence* target = nullptr;
        for (std::size_t k : recoverable) {
            if (!target || doc.slots[k].offset > target->offset) target = &doc.slots[k];
        }
        if (!target) continue;
        const auto it = grammar.slots.find(target->slot);
        if (it == grammar.slots.end()) continue;
        std::vector<std::string> distractors;
        for (const std::string& v : it->second) {
            if (v != target->value) distractors.push_back(v);
        }
        for (std::size_t i = distractors.size(); i > 1; --i) {
            std::swap(distractors[i - 1],
                      distractors[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }
        const std::size_t n_cand = std::min(opts.rank_candidates, distractors.size() + 1);
        if (n_cand < 2) continue;
        const std::string prefix = doc.text.substr(0, target->offset);
        const std::string rest = doc.text.substr(target->offset + target->value.size());
        RankItem item;
        item.prefix = prefix;
        item.answer = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n_cand) - 1));
        std::size_t next_distractor = 0;
        for (std::size_t c = 0; c < n_cand; ++c) {
            item.candidates.push_back((c == item.answer ? target->value : distractors[next_distractor++]) + rest);
        }
        rank_task.rank_items.push_back(std::move(item));
    }
    std::vector<Task> out;
    if (!infill_task.infill_items.empty()) out.push_back(std::move(infill_task));
    if (!rank_task.rank_items.empty()) out.push_back(std::move(rank_task));
    if (!loss_task.documents.empty()) out.push_back(std::move(loss_task));
    return out;
}

void validate_curve(std::span<const ComputePoint> curve) {
    if (curve.empty()) throw Error(ErrorCode::empty_input, "curve has no points");
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (!(curve[i].flops > 0.0)) throw Error(ErrorCode::precondition, "curve flops must be positive");
        if (i > 0 && !(curve[i].flops > curve[i - 1].flops)) {
            throw Error(ErrorCode::precondition, "curve flops must be strictly increasing");
        }
    }
}

double flops_at_quality(std::span<const ComputePoint> curve, double q) {
    validate_curve(curve);
    double lo = curve[0].quality, hi = curve[0].quality;
    for (const ComputePoint& p : curve) {
        lo = std::min(lo, p.quality);
        hi = std::max(hi, p.quality);
    }
    if (q < lo || q > hi) {
        std::ostringstream os;
        os << "quality " << q << " outside curve range [" << lo << ", " << hi << "]";
        throw Error(ErrorCode::extrapolation, os.str());
    }
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i].quality == q) return curve[i].flops;
        if (i + 1 < curve.size()) {
            const double q0 = curve[i].quality, q1 = curve[i + 1].quality;
            if ((q0 < q && q < q1) || (q1 < q && q < q0)) {
                const double t = (q - q0) / (q1 - q0);
                const double log_f = std::log(curve[i].flops) + t * (std::log(curve[i + 1].flops) - std::log(curve[i].flops));
                return std::exp(log_f);
            }
        }
    }
    throw Error(ErrorCode::extrapolation, "quality not attained by curve");
}

double savings_rate(std::span<const ComputePoint> baseline, std::span<const ComputePoint> treated, double q) {
    return flops_at_quality(baseline, q) / flops_at_quality(treated, q);
}

std::string scaling_curve_csv(const std::vector<CurveRow>& rows) {
    std::vector<std::string> task_names;
    for (const CurveRow& r : rows) {
        for (const TaskScore& s : r.report.scores) {
            if (std::find(task_names.begin(), task_names.end(), s.name) == task_names.end()) task_names.push_back(s.name);
        }
        for (const TaskScore& s : r.report.losses) {
            if (std::find(task_names.begin(), task_names.end(), s.name) == task_names.end()) task_names.push_back(s.name);
        }
    }
    std::ostringstream os;
    os << "label,tokens,flops";
    for (const std::string& n : task_names) os << ',' << n;
    os << ",aggregate\n";
    for (const CurveRow& r : rows) {
        os << r.label << ',' << r.tokens << ',' << format_double(r.flops);
        for (const std::string& n : task_names) {
            os << ',';
            for (const auto* list : {&r.report.scores, &r.report.losses}) {
                for (const TaskScore& s : *list) {
                    if (s.name == n) os << format_double(s.value);
                }
            }
        }
        os << ',' << format_double(r.report.aggregate) << '\n';
    }
    return os.str();
}

std::vector<ComputePoint> read_curve_csv(const std::string& text, const std::string& quality_column) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::empty_input, "curve CSV is empty");
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!s.empty() && s.back() == ',') out.emplace_back();
        return out;
    };
    const std::vector<std::string> header = split(line);
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    };
    const auto flops_col = column("flops");
    const auto q_col = column(quality_column);
    if (!flops_col || !q_col) {
        throw Error(ErrorCode::config, "curve CSV needs 'flops' and '" + quality_column + "' columns");
    }
    const auto label_col = column("label");
    const auto tokens_col = column("tokens");
    std::vector<ComputePoint> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> cells = split(line);
        if (cells.size() != header.size()) throw Error(ErrorCode::config, "ragged curve CSV row: " + line);
        ComputePoint p;
        p.flops = parse_double(cells[*flops_col]);
        p.quality = parse_double(cells[*q_col]);
        if (label_col) p.label = cells[*label_col];
        if (tokens_col) p.tokens = static_cast<std::uint64_t>(parse_int(cells[*tokens_col]));
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace ul2r
