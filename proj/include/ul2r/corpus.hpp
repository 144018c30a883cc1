#pragma once

// Training corpora: plain-text line files and a synthetic template grammar.
//
// Grammar config, one directive per line:
//   template: {name} has a {color} {animal}.
//   slot name: alice | bob | carol
//   slot color: red | green
// A slot repeated inside a template takes the same value at every occurrence.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ul2r/tokenizer.hpp"

namespace ul2r {

struct SlotOccurrence {
    std::string slot;
    std::string value;
    std::size_t offset = 0;  // byte offset in the document text
};

struct Document {
    std::string text;
    TokenSeq tokens;
    // Filled only for synthetic documents.
    std::size_t template_index = 0;
    std::vector<SlotOccurrence> slots;
};

struct Corpus {
    std::vector<Document> train;
    std::vector<Document> heldout;
    std::uint64_t seed = 0;
    std::string source;
};

// One document per line; a line goes to heldout when its seeded content hash
// falls above split_fraction. Empty lines are kept as empty documents.
Corpus load_text(const std::filesystem::path& path, double split_fraction, std::uint64_t seed);
Corpus corpus_from_lines(const std::vector<std::string>& lines, double split_fraction, std::uint64_t seed,
                         std::string source = "memory");

struct Grammar {
    std::vector<std::string> templates;
    std::map<std::string, std::vector<std::string>> slots;

    static Grammar parse(std::string_view text);
    static Grammar load(const std::filesystem::path& path);
    std::size_t combination_count() const;
};

struct SynthOptions {
    std::size_t n_docs = 0;          // 0 = every combination once
    double heldout_fraction = 0.0;   // share of combinations reserved for heldout
};

// Deterministic sample of distinct template instantiations. When n_docs
// equals the number of combinations every combination appears exactly once.
Corpus synth_corpus(const Grammar& grammar, const SynthOptions& opts, std::uint64_t seed);

// Documents with at least two tokens; shorter ones cannot be corrupted.
std::vector<std::size_t> trainable_indices(const std::vector<Document>& docs);

} // namespace ul2r
