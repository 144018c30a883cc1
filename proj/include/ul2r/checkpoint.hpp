#pragma once

// Checkpoint file layout (all integers little-endian):
//   "UL2R"                     4 magic bytes
//   u32 version
//   u32 header length, header  "key: value" UTF-8 metadata (see KeyValues)
//   tensors, each:
//     u32 name length, name
//     u32 rank, u32 dims[rank]
//     f32 values (IEEE-754, row-major)
// Tensors are the model parameters followed by the Adam moments, prefixed
// "adam.m." and "adam.v.".

#include <cstdint>
#include <filesystem>
#include <string>

#include "ul2r/model.hpp"

namespace ul2r {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
    ModelConfig model;
    std::uint64_t vocab_hash = 0;
    std::string phase = "init";      // init | causal | ul2r
    std::uint64_t phase_steps = 0;   // steps run by the phase that wrote this checkpoint
    std::uint64_t total_steps = 0;   // across all phases
    std::uint64_t tokens = 0;        // cumulative training tokens across phases
    std::uint64_t adam_step = 0;
    std::string lineage;             // '/'-joined phase history, e.g. "causal/ul2r"

    friend bool operator==(const CheckpointHeader&, const CheckpointHeader&) = default;
};

struct Checkpoint {
    CheckpointHeader header;
    Params<float> params;
    Params<float> adam_m;
    Params<float> adam_v;
};

// Fresh checkpoint holding initial parameters and zero optimizer state.
Checkpoint initial_checkpoint(const ModelConfig& cfg, std::uint64_t seed);

// Exact equality of header and every tensor bit pattern.
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ul2r
