#pragma once

// Line-oriented record formats.
//
// Corrupted example (one JSON object per line, fields in this order):
//   {"mode": <id|null>, "inputs": [...], "targets": [...], "original_len": n}
// Packed row (same conventions, extended with segment bounds):
//   {"tokens": [...], "loss_mask": [...], "segment_bounds": [[start, end, prefix_len], ...], "pad_count": k}
// Metrics CSV header:
//   step,phase,lr,loss,tokens,flops

#include <string>
#include <vector>

#include "ul2r/denoiser.hpp"
#include "ul2r/packer.hpp"
#include "ul2r/trainer.hpp"

namespace ul2r {

std::string example_to_json(const CorruptedExample& ex);
CorruptedExample example_from_json(const std::string& line);

std::vector<std::string> packed_rows_to_json(const PackedBatch& batch);

inline constexpr const char* kMetricsHeader = "step,phase,lr,loss,tokens,flops";
std::string metric_to_csv(const MetricRecord& rec);
std::vector<MetricRecord> read_metrics_csv(const std::string& text);

} // namespace ul2r
