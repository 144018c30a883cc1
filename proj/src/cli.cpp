#include "ul2r/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ul2r/checkpoint.hpp"
#include "ul2r/corpus.hpp"
#include "ul2r/errors.hpp"
#include "ul2r/eval.hpp"
#include "ul2r/inference.hpp"
#include "ul2r/records.hpp"
#include "ul2r/rng.hpp"
#include "ul2r/run_config.hpp"
#include "ul2r/trainer.hpp"

namespace ul2r {

namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << text;
}

std::string content_hash(const fs::path& path) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : read_file(path)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// Run manifest: everything needed to repeat a command, written next to its
// primary output before any long-running work starts.
class Manifest {
public:
    Manifest(const std::vector<std::string>& args, std::uint64_t seed) {
        kv_.set("tool", std::string("ul2r ") + kToolVersion);
        kv_.set("command", nlohmann::json(args).dump());
        kv_.set("seed", std::to_string(seed));
    }

    void input(const std::string& name, const fs::path& path) {
        kv_.set("input." + name, path.string() + " fnv1a=" + content_hash(path));
    }
    void output(const std::string& name, const fs::path& path) { kv_.set("output." + name, path.string()); }
    void config(const KeyValues& cfg) {
        for (const auto& [k, v] : cfg.entries()) kv_.set("config." + k, v);
    }

    void write(const fs::path& primary_output) const {
        write_file(fs::path(primary_output.string() + ".manifest"), kv_.dump());
    }

private:
    KeyValues kv_;
};

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> seed) {
    KeyValues kv = config_path.empty() ? KeyValues{} : KeyValues::parse(read_file(config_path));
    for (const std::string& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::usage, "--set expects key=value, got '" + o + "'");
        kv.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (seed) kv.set("seed", std::to_string(*seed));
    return run_config_from(kv);
}

void append_line(const fs::path& path, const std::string& line) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error(ErrorCode::io, "cannot append to " + path.string());
    out << line << '\n';
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"UL2R laboratory: mixture-of-denoisers continued training at desk scale", "ul2r"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "global random seed (recorded in every manifest)");

    std::string config_path, corpus_path, out_path, ckpt_path, from_path, metrics_path, tasks_path, prompt, mode = "none";
    std::string grammar_path, heldout_path, packed_path, baseline_path, treated_path, manifest_path;
    std::string quality_column = "aggregate";
    std::vector<std::string> overrides, ckpts;
    std::size_t max_tokens = 32, n_docs = 0, l_in = 0, l_tgt = 0;
    double heldout_fraction = 0.1, quality = 0.0;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat key: value config file");
        sub->add_option("--set", overrides, "override a config key (key=value), repeatable");
    };

    CLI::App* c_config = app.add_subcommand("config", "print the resolved configuration");
    add_config(c_config);

    CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic template corpus and desk task suite");
    c_synth->add_option("--grammar", grammar_path, "grammar spec")->required();
    c_synth->add_option("--docs", n_docs, "number of documents (0 = every combination once)");
    c_synth->add_option("--heldout", heldout_fraction, "held-out share of combinations");
    c_synth->add_option("--out", out_path, "training documents, one per line")->required();
    c_synth->add_option("--heldout-out", heldout_path, "held-out documents")->required();
    c_synth->add_option("--tasks-out", tasks_path, "desk task suite (JSON)");

    CLI::App* c_corrupt = app.add_subcommand("corrupt", "apply the denoiser mixture to a corpus");
    c_corrupt->add_option("--corpus", corpus_path, "text corpus")->required();
    c_corrupt->add_option("--mixture", config_path, "config file carrying mixture settings");
    c_corrupt->add_option("--set", overrides, "override a config key (key=value), repeatable");
    c_corrupt->add_option("--out", out_path, "JSONL of corrupted examples")->required();
    c_corrupt->add_option("--packed-out", packed_path, "JSONL of packed rows");
    c_corrupt->add_option("--l-in", l_in, "input budget for --packed-out");
    c_corrupt->add_option("--l-tgt", l_tgt, "target budget for --packed-out");

    CLI::App* c_pretrain = app.add_subcommand("pretrain", "phase 1: causal LM from scratch");
    c_pretrain->add_option("--corpus", corpus_path, "text corpus")->required();
    add_config(c_pretrain);
    c_pretrain->add_option("--out", out_path, "output checkpoint")->required();
    c_pretrain->add_option("--metrics", metrics_path, "metrics CSV (default: <out>.metrics.csv)");

    CLI::App* c_ul2r = app.add_subcommand("ul2r", "phase 2: UL2R continued training from a checkpoint");
    c_ul2r->add_option("--from", from_path, "source checkpoint")->required();
    c_ul2r->add_option("--corpus", corpus_path, "text corpus")->required();
    add_config(c_ul2r);
    c_ul2r->add_option("--out", out_path, "output checkpoint")->required();
    c_ul2r->add_option("--metrics", metrics_path, "metrics CSV (default: <out>.metrics.csv)");

    CLI::App* c_generate = app.add_subcommand("generate", "greedy continuation of a prompt");
    CLI::App* c_infill = app.add_subcommand("infill", "fill <extra_id_k> blanks in a prompt");
    for (CLI::App* sub : {c_generate, c_infill}) {
        sub->add_option("--ckpt", ckpt_path, "checkpoint")->required();
        sub->add_option("--prompt", prompt, "prompt text")->required();
        sub->add_option("--mode", mode, "mode token: none, s2s, nlu, nlg")
            ->check(CLI::IsMember({"none", "s2s", "nlu", "nlg"}));
        sub->add_option("--max-tokens", max_tokens, "generation budget");
    }

    CLI::App* c_eval = app.add_subcommand("eval", "score a checkpoint on a task suite");
    c_eval->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    c_eval->add_option("--tasks", tasks_path, "task suite (JSON)")->required();
    c_eval->add_option("--out", out_path, "CSV report")->required();

    CLI::App* c_curve = app.add_subcommand("curve", "compute/quality points for a list of checkpoints");
    c_curve->add_option("--ckpt", ckpts, "checkpoints in lineage order, repeatable")->required();
    c_curve->add_option("--tasks", tasks_path, "task suite (JSON)")->required();
    c_curve->add_option("--out", out_path, "curve CSV")->required();

    CLI::App* c_savings = app.add_subcommand("savings", "compute ratio at matched quality");
    c_savings->add_option("--baseline", baseline_path, "baseline curve CSV")->required();
    c_savings->add_option("--treated", treated_path, "treated curve CSV")->required();
    c_savings->add_option("--quality", quality, "quality level to match")->required();
    c_savings->add_option("--column", quality_column, "quality column name");

    CLI::App* c_rerun = app.add_subcommand("rerun", "repeat the command recorded in a run manifest");
    c_rerun->add_option("--manifest", manifest_path, "manifest file")->required();

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try {
        const std::uint64_t seed_value = seed.value_or(0);
        if (c_config->parsed()) {
            out << dump_config(resolve_config(config_path, overrides, seed));
            return 0;
        }

        if (c_synth->parsed()) {
            const Grammar grammar = Grammar::load(grammar_path);
            Manifest manifest(args, seed_value);
            manifest.input("grammar", grammar_path);
            manifest.output("train", out_path);
            manifest.output("heldout", heldout_path);
            manifest.write(out_path);
            const Corpus corpus = synth_corpus(grammar, {n_docs, heldout_fraction}, seed_value);
            auto dump_docs = [](const std::vector<Document>& docs) {
                std::string s;
                for (const Document& d : docs) s += d.text + "\n";
                return s;
            };
            write_file(out_path, dump_docs(corpus.train));
            write_file(heldout_path, dump_docs(corpus.heldout));
            if (!tasks_path.empty()) {
                DeskTaskOptions topts;
                topts.seed = seed_value;
                write_file(tasks_path, tasks_to_json(desk_tasks(corpus.heldout, grammar, topts)));
            }
            out << corpus.train.size() << " train, " << corpus.heldout.size() << " heldout documents\n";
            return 0;
        }

        if (c_corrupt->parsed()) {
            const RunConfig cfg = resolve_config(config_path, overrides, seed);
            Manifest manifest(args, cfg.seed);
            manifest.input("corpus", corpus_path);
            manifest.config(to_key_values(cfg));
            manifest.output("examples", out_path);
            if (!packed_path.empty()) manifest.output("packed", packed_path);
            manifest.write(out_path);

            const Corpus corpus = load_text(corpus_path, 1.0, cfg.seed);
            std::vector<CorruptedExample> examples;
            std::string lines;
            for (std::size_t i = 0; i < corpus.train.size(); ++i) {
                const TokenSeq& doc = corpus.train[i].tokens;
                if (doc.size() < 2) continue;
                Rng rng(derive_seed(cfg.seed, {i}));
                const DenoiserSpec spec = sample_denoiser(cfg.mixture, rng);
                examples.push_back(apply_denoiser(doc, spec, rng, cfg.corrupt));
                lines += example_to_json(examples.back()) + "\n";
            }
            write_file(out_path, lines);
            if (!packed_path.empty()) {
                PackOptions popts;
                popts.pad_prefix_first = cfg.pad_prefix_first;
                const PackedBatch batch = pack_examples(examples, l_in ? l_in : cfg.l_in, l_tgt ? l_tgt : cfg.l_tgt, popts);
                std::string packed;
                for (const std::string& row : packed_rows_to_json(batch)) packed += row + "\n";
                write_file(packed_path, packed);
            }
            out << examples.size() << " examples\n";
            return 0;
        }

        if (c_pretrain->parsed() || c_ul2r->parsed()) {
            const bool is_ul2r = c_ul2r->parsed();
            const RunConfig cfg = resolve_config(config_path, overrides, seed);
            const Phase phase = is_ul2r ? Phase::ul2r : Phase::causal;
            if (metrics_path.empty()) metrics_path = out_path + ".metrics.csv";

            std::optional<Checkpoint> source;
            if (is_ul2r) {
                if (!fs::exists(from_path)) {
                    throw Error(ErrorCode::io, "source checkpoint not found: " + from_path);
                }
                source = load_checkpoint(from_path);
            }
            Manifest manifest(args, cfg.seed);
            manifest.input("corpus", corpus_path);
            if (is_ul2r) manifest.input("source", from_path);
            manifest.config(to_key_values(cfg));
            manifest.output("checkpoint", out_path);
            manifest.output("metrics", metrics_path);
            manifest.write(out_path);

            const Corpus corpus = load_text(corpus_path, cfg.split_fraction, cfg.seed);
            write_file(metrics_path, std::string(kMetricsHeader) + "\n");
            const TrainResult result =
                run_phase(phase_config(cfg, phase), corpus, source ? &*source : nullptr,
                          [&](const MetricRecord& rec) { append_line(metrics_path, metric_to_csv(rec)); });
            save_checkpoint(result.checkpoint, out_path);
            const double last_loss = result.log.empty() ? 0.0 : result.log.back().loss;
            out << phase_name(phase) << ": " << result.log.size() << " steps, final loss " << last_loss << ", "
                << result.checkpoint.header.tokens << " cumulative tokens\n";
            return 0;
        }

        if (c_generate->parsed() || c_infill->parsed()) {
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            const std::optional<TokenId> mode_token = parse_mode_flag(mode);
            if (c_generate->parsed()) {
                const TokenSeq outp = greedy_generate(ckpt.params, encode_with_sentinels(prompt), max_tokens, mode_token);
                out << decode(outp) << '\n';
            } else {
                const InfillResult res = infill(ckpt.params, parse_infill_prompt(prompt, mode_token), max_tokens);
                for (std::size_t k = 0; k < res.fills.size(); ++k) {
                    out << "<extra_id_" << k << ">: " << decode(res.fills[k]) << '\n';
                }
                out << "raw: " << decode(res.raw) << '\n';
            }
            return 0;
        }

        if (c_eval->parsed()) {
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            const std::vector<Task> tasks = parse_tasks_json(read_file(tasks_path));
            Manifest manifest(args, seed_value);
            manifest.input("checkpoint", ckpt_path);
            manifest.input("tasks", tasks_path);
            manifest.output("report", out_path);
            manifest.write(out_path);
            const EvalReport report = evaluate(ckpt.params, tasks);
            std::ostringstream csv;
            csv << "task,kind,value,count\n";
            for (const TaskScore& s : report.scores) {
                csv << s.name << ',' << (s.kind == TaskKind::rank ? "rank" : "infill") << ',' << format_double(s.value)
                    << ',' << s.count << '\n';
            }
            for (const TaskScore& s : report.losses) {
                csv << s.name << ",loss," << format_double(s.value) << ',' << s.count << '\n';
            }
            csv << "aggregate,mean," << format_double(report.aggregate) << ',' << report.scores.size() << '\n';
            write_file(out_path, csv.str());
            out << csv.str();
            return 0;
        }

        if (c_curve->parsed()) {
            const std::vector<Task> tasks = parse_tasks_json(read_file(tasks_path));
            Manifest manifest(args, seed_value);
            manifest.input("tasks", tasks_path);
            manifest.output("curve", out_path);
            manifest.write(out_path);
            std::vector<CurveRow> rows;
            std::optional<CheckpointHeader> first;
            for (const std::string& path : ckpts) {
                if (!fs::exists(path)) {
                    err << "warning: skipping missing checkpoint " << path << '\n';
                    continue;
                }
                const Checkpoint ckpt = load_checkpoint(path);
                if (first && !(first->model == ckpt.header.model)) {
                    throw Error(ErrorCode::incompatible_vocab, "checkpoint " + path + " has a different model configuration");
                }
                if (!first) first = ckpt.header;
                CurveRow row;
                row.label = fs::path(path).stem().string();
                row.tokens = ckpt.header.tokens;
                row.flops = training_flops(ckpt.header.model, ckpt.header.tokens);
                row.report = evaluate(ckpt.params, tasks);
                rows.push_back(std::move(row));
            }
            write_file(out_path, scaling_curve_csv(rows));
            out << rows.size() << " curve points\n";
            return 0;
        }

        if (c_savings->parsed()) {
            const auto base = read_curve_csv(read_file(baseline_path), quality_column);
            const auto treated = read_curve_csv(read_file(treated_path), quality_column);
            out << std::fixed << std::setprecision(2) << savings_rate(base, treated, quality) << '\n';
            return 0;
        }

        if (c_rerun->parsed()) {
            const KeyValues kv = KeyValues::parse(read_file(manifest_path));
            const std::vector<std::string> recorded = nlohmann::json::parse(kv.require("command")).get<std::vector<std::string>>();
            if (!recorded.empty() && recorded.front() == "rerun") {
                throw Error(ErrorCode::usage, "manifest records a rerun command");
            }
            return run_cli(recorded, out, err);
        }
    } catch (const Error& e) {
        err << "error: " << error_code_name(e.code()) << ": " << e.what() << '\n';
        return e.code() == ErrorCode::usage ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace ul2r
