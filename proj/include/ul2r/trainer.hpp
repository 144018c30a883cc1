#pragma once

// Two-phase training: causal-LM pretraining, then UL2R continued training on
// the mixture of denoisers starting from the phase-1 checkpoint.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ul2r/checkpoint.hpp"
#include "ul2r/corpus.hpp"
#include "ul2r/denoiser.hpp"
#include "ul2r/model.hpp"

namespace ul2r {

enum class Phase { causal, ul2r };
enum class Schedule { cosine, constant };

const char* phase_name(Phase phase);
Phase parse_phase(const std::string& name);
const char* schedule_name(Schedule schedule);
Schedule parse_schedule(const std::string& name);

// Cosine: lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi step / total)); constant: lr_max.
double lr_at(std::size_t step, std::size_t total, double lr_max, double lr_min, Schedule schedule);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    Phase phase = Phase::causal;
    std::size_t steps = 0;
    std::size_t batch_size = 32;  // examples per step
    std::size_t l_in = 256;
    std::size_t l_tgt = 256;
    double lr_max = 1e-4;
    double lr_min = 1e-6;
    Schedule schedule = Schedule::cosine;
    AdamConfig adam;
    double grad_clip = 1.0;  // global L2 norm; 0 disables
    std::uint64_t seed = 0;
    std::optional<MixtureConfig> mixture;  // ul2r only
    CorruptOptions corrupt;
    bool pad_prefix_first = false;
    ModelConfig model;  // used when no source checkpoint is given

    std::size_t row_len() const { return l_in + l_tgt; }
    void validate(bool has_source) const;
};

struct MetricRecord {
    std::size_t step = 0;  // 1-based within the phase
    Phase phase = Phase::causal;
    double lr = 0.0;
    double loss = 0.0;
    std::uint64_t tokens = 0;  // cumulative across phases
    double flops = 0.0;        // cumulative, 6 * N * tokens

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<MetricRecord> log;
};

using StepCallback = std::function<void(const MetricRecord&)>;

// Builds the examples for one training step. Exposed for tests and tooling.
std::vector<CorruptedExample> step_examples(const TrainConfig& cfg, const Corpus& corpus, std::size_t step);

TrainResult run_phase(const TrainConfig& cfg, const Corpus& corpus, const Checkpoint* source,
                      const StepCallback& on_step = {});

} // namespace ul2r
