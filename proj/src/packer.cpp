#include "ul2r/packer.hpp"

#include <string>

#include "ul2r/errors.hpp"

namespace ul2r {

std::vector<std::size_t> PackedBatch::prefix_lens() const {
    std::vector<std::size_t> out;
    for (const auto& row : segments) {
        for (const Segment& s : row) out.push_back(s.prefix_len);
    }
    return out;
}

std::size_t PackedBatch::used_len(std::size_t row) const {
    return segments[row].empty() ? 0 : segments[row].back().end;
}

namespace {

struct Prepared {
    TokenSeq inputs;
    TokenSeq targets;
    std::size_t prefix_len = 0;
    std::size_t length = 0;
};

Prepared prepare(const CorruptedExample& ex, std::size_t l_in, std::size_t l_tgt, const PackOptions& opts) {
    Prepared p{ex.inputs, ex.targets, 0, 0};
    if (p.inputs.empty()) {
        throw Error(ErrorCode::malformed_example, "example has no inputs to condition on");
    }
    if (p.inputs.size() > l_in || p.targets.size() > l_tgt) {
        if (!opts.trim) {
            throw Error(ErrorCode::example_too_long,
                        "example with " + std::to_string(p.inputs.size()) + " inputs and " +
                            std::to_string(p.targets.size()) + " targets exceeds budget " + std::to_string(l_in) +
                            "/" + std::to_string(l_tgt));
        }
        if (p.inputs.size() > l_in) {
            const bool keep_mode = ex.mode && p.inputs.front() == *ex.mode && l_in >= 2;
            TokenSeq trimmed;
            if (keep_mode) trimmed.push_back(p.inputs.front());
            trimmed.insert(trimmed.end(), p.inputs.end() - static_cast<std::ptrdiff_t>(l_in - trimmed.size()),
                           p.inputs.end());
            p.inputs = std::move(trimmed);
        }
        if (p.targets.size() > l_tgt) {
            p.targets.resize(l_tgt);
        }
    }
    if (p.inputs.empty()) {
        throw Error(ErrorCode::example_too_long, "input budget of zero leaves nothing to condition on");
    }
    p.prefix_len = opts.pad_prefix_first ? l_in : p.inputs.size();
    p.length = p.prefix_len + p.targets.size();
    if (p.length > l_in + l_tgt) {
        throw Error(ErrorCode::example_too_long, "example does not fit a row of length " + std::to_string(l_in + l_tgt));
    }
    return p;
}

} // namespace

PackedBatch pack_examples(const std::vector<CorruptedExample>& examples, std::size_t l_in, std::size_t l_tgt,
                          const PackOptions& opts) {
    const std::size_t row_len = l_in + l_tgt;
    PackedBatch batch;
    batch.row_len = row_len;

    std::vector<std::size_t> fill;  // used positions per row
    for (const CorruptedExample& ex : examples) {
        Prepared p = prepare(ex, l_in, l_tgt, opts);
        std::size_t row = 0;
        while (row < fill.size() && fill[row] + p.length > row_len) ++row;
        if (row == fill.size()) {
            fill.push_back(0);
            batch.rows.emplace_back();
            batch.segments.emplace_back();
        }
        TokenSeq& r = batch.rows[row];
        const std::size_t start = fill[row];
        r.insert(r.end(), p.inputs.begin(), p.inputs.end());
        r.resize(start + p.prefix_len, vocab::kPad);
        r.insert(r.end(), p.targets.begin(), p.targets.end());
        batch.segments[row].push_back({start, start + p.length, p.prefix_len});
        fill[row] += p.length;
    }
    for (std::size_t row = 0; row < batch.rows.size(); ++row) {
        batch.pad_counts.push_back(row_len - fill[row]);
        batch.rows[row].resize(row_len, vocab::kPad);
    }
    batch.loss_mask = loss_positions(batch);
    return batch;
}

namespace {

template <typename Visible>
AttentionMask build_mask(const PackedBatch& batch, Visible visible) {
    AttentionMask mask;
    mask.row_len = batch.row_len;
    mask.allowed.resize(batch.row_count());
    for (std::size_t row = 0; row < batch.row_count(); ++row) {
        auto& a = mask.allowed[row];
        a.assign(batch.row_len * batch.row_len, 0);
        for (const Segment& s : batch.segments[row]) {
            for (std::size_t i = s.start; i < s.end; ++i) {
                for (std::size_t j = s.start; j < s.end; ++j) {
                    if (visible(s, i, j)) a[i * batch.row_len + j] = 1;
                }
            }
        }
    }
    return mask;
}

} // namespace

AttentionMask prefix_lm_mask(const PackedBatch& batch) {
    return build_mask(batch, [](const Segment& s, std::size_t i, std::size_t j) {
        return j < s.target_begin() || j <= i;
    });
}

AttentionMask causal_mask(const PackedBatch& batch) {
    return build_mask(batch, [](const Segment&, std::size_t i, std::size_t j) { return j <= i; });
}

std::vector<std::vector<std::uint8_t>> loss_positions(const PackedBatch& batch) {
    std::vector<std::vector<std::uint8_t>> out(batch.row_count());
    for (std::size_t row = 0; row < batch.row_count(); ++row) {
        out[row].assign(batch.row_len, 0);
        for (const Segment& s : batch.segments[row]) {
            for (std::size_t i = s.target_begin(); i < s.end; ++i) out[row][i] = 1;
        }
    }
    return out;
}

} // namespace ul2r
