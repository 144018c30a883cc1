#pragma once

// Compute accounting, task-suite evaluation and compute/quality curves.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ul2r/corpus.hpp"
#include "ul2r/model.hpp"
#include "ul2r/tokenizer.hpp"

namespace ul2r {

// steps * batch * row_len, exactly.
std::uint64_t count_tokens(std::uint64_t steps, std::uint64_t batch, std::uint64_t row_len);

// 6 * N * tokens.
double training_flops(std::size_t param_count, std::uint64_t tokens);
double training_flops(const ModelConfig& cfg, std::uint64_t tokens);

enum class TaskKind { rank, infill, loss };

// Which objective a loss task measures on its documents.
enum class LossObjective { causal, s, r, x };

struct RankItem {
    std::string prefix;
    std::vector<std::string> candidates;
    std::size_t answer = 0;
};

struct InfillItem {
    std::string prompt;  // blanks as <extra_id_k>
    std::vector<std::string> fills;
};

struct Task {
    std::string name;
    TaskKind kind = TaskKind::rank;
    std::optional<TokenId> mode;
    std::size_t max_tokens = 32;  // infill generation budget
    LossObjective objective = LossObjective::causal;
    std::uint64_t seed = 0;       // loss tasks: corruption seed
    std::vector<RankItem> rank_items;
    std::vector<InfillItem> infill_items;
    std::vector<std::string> documents;  // loss tasks
};

struct TaskScore {
    std::string name;
    TaskKind kind = TaskKind::rank;
    double value = 0.0;  // accuracy / exact match in [0,1], or mean loss
    std::size_t count = 0;
};

struct EvalReport {
    std::vector<TaskScore> scores;  // rank and infill tasks; these form the aggregate
    std::vector<TaskScore> losses;  // loss tasks, reported separately per objective
    double aggregate = 0.0;
};

// Arithmetic mean; throws empty_input on an empty span.
double aggregate_mean(std::span<const double> scores);

template <typename T>
TaskScore evaluate_task(const Params<T>& params, const Task& task);

template <typename T>
EvalReport evaluate(const Params<T>& params, const std::vector<Task>& tasks);

std::vector<Task> parse_tasks_json(const std::string& text);
std::string tasks_to_json(const std::vector<Task>& tasks);

struct DeskTaskOptions {
    std::size_t max_items = 200;
    std::size_t rank_candidates = 4;
    std::uint64_t seed = 0;
};

// Template words of a synthetic document: alphanumeric runs that overlap no
// slot occurrence and do not start at offset 0, as (offset, length).
std::vector<std::pair<std::size_t, std::size_t>> template_words(const Document& doc);

// Builds the desk-scale suite from synthetic documents: single-blank template
// infilling, slot rank classification, and held-out causal loss.
std::vector<Task> desk_tasks(const std::vector<Document>& docs, const Grammar& grammar, const DeskTaskOptions& opts);

struct ComputePoint {
    double flops = 0.0;
    double quality = 0.0;
    std::string label;
    std::uint64_t tokens = 0;
};

// Validates flops > 0 and strictly increasing.
void validate_curve(std::span<const ComputePoint> curve);

// Smallest compute at which the curve reaches quality q, by piecewise-linear
// interpolation of quality against log(flops). Throws extrapolation when q is
// outside the curve's quality range.
double flops_at_quality(std::span<const ComputePoint> curve, double q);

// flops_baseline(q) / flops_treated(q).
double savings_rate(std::span<const ComputePoint> baseline, std::span<const ComputePoint> treated, double q);

struct CurveRow {
    std::string label;
    std::uint64_t tokens = 0;
    double flops = 0.0;
    EvalReport report;
};

// CSV: label,tokens,flops,<task names...>,aggregate
std::string scaling_curve_csv(const std::vector<CurveRow>& rows);

// Reads a curve CSV, taking flops and the named quality column.
std::vector<ComputePoint> read_curve_csv(const std::string& text, const std::string& quality_column = "aggregate");

} // namespace ul2r
