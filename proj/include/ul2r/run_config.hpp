#pragma once

// Resolved configuration for both training phases, as read from and written
// to the flat "key: value" config format. Keys under "paper." are the
// reference large-scale settings; they are emitted for documentation and
// ignored on input.

#include <cstddef>
#include <cstdint>
#include <string>

#include "ul2r/config.hpp"
#include "ul2r/denoiser.hpp"
#include "ul2r/model.hpp"
#include "ul2r/trainer.hpp"

namespace ul2r {

struct PaperPreset {
    static constexpr std::size_t l_in = 1024;
    static constexpr std::size_t l_tgt = 1024;
    static constexpr std::size_t steps = 20000;
    static constexpr std::size_t batch_size = 32;
    static constexpr double lr_max = 1e-4;
    static constexpr double lr_min = 1e-6;
    static constexpr double pretrain_tokens = 780e9;
};

struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model;
    std::size_t l_in = 256;
    std::size_t l_tgt = 256;
    bool pad_prefix_first = false;
    double split_fraction = 1.0;  // share of corpus lines used for training

    std::size_t pretrain_steps = 2000;
    std::size_t pretrain_batch_size = 32;
    double pretrain_lr = 1e-3;

    std::size_t ul2r_steps = 100;
    std::size_t ul2r_batch_size = 32;
    double lr_max = PaperPreset::lr_max;
    double lr_min = PaperPreset::lr_min;
    Schedule schedule = Schedule::cosine;

    MixtureConfig mixture;
    CorruptOptions corrupt;
    AdamConfig adam;
    double grad_clip = 1.0;
};

KeyValues to_key_values(const RunConfig& cfg);

// Unknown keys are rejected; missing keys keep their defaults.
RunConfig run_config_from(const KeyValues& kv);

std::string dump_config(const RunConfig& cfg);

// Phase 1 runs at a constant pretrain_lr; phase 2 uses lr_max/lr_min/schedule
// and the mixture.
TrainConfig phase_config(const RunConfig& cfg, Phase phase);

} // namespace ul2r
