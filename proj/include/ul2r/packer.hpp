#pragma once

// Fixed-length training rows with prefix-optimized concatenation: each
// example becomes one segment laid out as [inputs][targets] with no padding
// in between; padding only fills the row tail.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ul2r/denoiser.hpp"
#include "ul2r/tokenizer.hpp"

namespace ul2r {

struct Segment {
    std::size_t start = 0;       // first position in the row
    std::size_t end = 0;         // one past the last position
    std::size_t prefix_len = 0;  // positions [start, start+prefix_len) are bidirectional

    std::size_t target_begin() const { return start + prefix_len; }

    friend bool operator==(const Segment&, const Segment&) = default;
};

struct PackedBatch {
    std::size_t row_len = 0;
    std::vector<TokenSeq> rows;
    std::vector<std::vector<Segment>> segments;  // per row, in position order
    std::vector<std::vector<std::uint8_t>> loss_mask;
    std::vector<std::size_t> pad_counts;

    std::size_t row_count() const { return rows.size(); }
    std::vector<std::size_t> prefix_lens() const;
    // Number of positions before the tail padding.
    std::size_t used_len(std::size_t row) const;
};

struct PackOptions {
    // Trim inputs from the left (keeping the mode token) and targets from the
    // right when they exceed their budgets. When false, oversize examples are
    // rejected with example_too_long.
    bool trim = true;
    // Reproduces the older layout [inputs][inputs padding][targets], where
    // each segment reserves the full input budget. Interior padding is part of
    // the segment prefix.
    bool pad_prefix_first = false;
};

PackedBatch pack_examples(const std::vector<CorruptedExample>& examples, std::size_t l_in, std::size_t l_tgt,
                          const PackOptions& opts = {});

// Row-major L x L relation per row; allowed(i, j) means position i may attend to j.
struct AttentionMask {
    std::size_t row_len = 0;
    std::vector<std::vector<std::uint8_t>> allowed;

    bool at(std::size_t row, std::size_t i, std::size_t j) const { return allowed[row][i * row_len + j] != 0; }
};

// Bidirectional inside each segment prefix, causal over its targets, nothing
// across segments, nothing to or from tail padding.
AttentionMask prefix_lm_mask(const PackedBatch& batch);

// Plain causal mask within segments (prefix ignored).
AttentionMask causal_mask(const PackedBatch& batch);

std::vector<std::vector<std::uint8_t>> loss_positions(const PackedBatch& batch);

} // namespace ul2r
