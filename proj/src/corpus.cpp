#include "ul2r/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ul2r/errors.hpp"
#include "ul2r/rng.hpp"

namespace ul2r {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double unit_hash(std::uint64_t seed, std::string_view key) {
    return static_cast<double>(splitmix64(seed ^ fnv1a(key)) >> 11) * 0x1.0p-53;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Piece {
    bool is_slot = false;
    std::string text;
};

std::vector<Piece> split_template(const std::string& tmpl) {
    std::vector<Piece> out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const auto open = tmpl.find('{', i);
        if (open == std::string::npos) {
            out.push_back({false, tmpl.substr(i)});
            break;
        }
        const auto close = tmpl.find('}', open);
        if (close == std::string::npos) {
            throw Error(ErrorCode::config, "unterminated slot in template '" + tmpl + "'");
        }
        if (open > i) out.push_back({false, tmpl.substr(i, open - i)});
        out.push_back({true, tmpl.substr(open + 1, close - open - 1)});
        i = close + 1;
    }
    return out;
}

std::vector<std::string> distinct_slots(const std::vector<Piece>& pieces) {
    std::vector<std::string> out;
    for (const Piece& p : pieces) {
        if (p.is_slot && std::find(out.begin(), out.end(), p.text) == out.end()) out.push_back(p.text);
    }
    return out;
}

} // namespace

Corpus corpus_from_lines(const std::vector<std::string>& lines, double split_fraction, std::uint64_t seed,
                         std::string source) {
    if (!(split_fraction >= 0.0 && split_fraction <= 1.0)) {
        throw Error(ErrorCode::config, "split fraction must lie in [0, 1]");
    }
    if (lines.empty()) {
        throw Error(ErrorCode::empty_input, "corpus '" + source + "' has no lines");
    }
    Corpus c;
    c.seed = seed;
    c.source = std::move(source);
    for (const std::string& line : lines) {
        Document d{line, encode(line), 0, {}};
        if (unit_hash(seed, line) < split_fraction) {
            c.train.push_back(std::move(d));
        } else {
            c.heldout.push_back(std::move(d));
        }
    }
    return c;
}

Corpus load_text(const std::filesystem::path& path, double split_fraction, std::uint64_t seed) {
    const std::string text = read_file(path);
    if (text.empty()) {
        throw Error(ErrorCode::empty_input, "corpus file " + path.string() + " is empty");
    }
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        std::string line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = nl + 1;
    }
    return corpus_from_lines(lines, split_fraction, seed, path.string());
}

Grammar Grammar::parse(std::string_view text) {
    Grammar g;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (line.empty() || line.front() == '#') continue;
        if (line.starts_with("template:")) {
            g.templates.emplace_back(trim(line.substr(9)));
        } else if (line.starts_with("slot ")) {
            const auto colon = line.find(':');
            if (colon == std::string_view::npos) throw Error(ErrorCode::config, "slot line without ':'");
            const std::string name(trim(line.substr(5, colon - 5)));
            std::vector<std::string>& values = g.slots[name];
            std::string_view rest = line.substr(colon + 1);
            while (!rest.empty()) {
                const auto bar = rest.find('|');
                const std::string_view v = trim(rest.substr(0, bar));
                if (!v.empty()) values.emplace_back(v);
                rest = bar == std::string_view::npos ? std::string_view{} : rest.substr(bar + 1);
            }
        } else {
            throw Error(ErrorCode::config, "unrecognised grammar line '" + std::string(line) + "'");
        }
    }
    if (g.templates.empty()) throw Error(ErrorCode::empty_input, "grammar defines no templates");
    for (const std::string& t : g.templates) {
        for (const std::string& s : distinct_slots(split_template(t))) {
            auto it = g.slots.find(s);
            if (it == g.slots.end() || it->second.empty()) {
                throw Error(ErrorCode::empty_input, "slot '" + s + "' has no fillers");
            }
        }
    }
    return g;
}

Grammar Grammar::load(const std::filesystem::path& path) {
    return parse(read_file(path));
}

std::size_t Grammar::combination_count() const {
    std::size_t total = 0;
    for (const std::string& t : templates) {
        std::size_t n = 1;
        for (const std::string& s : distinct_slots(split_template(t))) n *= slots.at(s).size();
        total += n;
    }
    return total;
}

Corpus synth_corpus(const Grammar& grammar, const SynthOptions& opts, std::uint64_t seed) {
    if (grammar.templates.empty()) throw Error(ErrorCode::empty_input, "grammar defines no templates");
    const std::size_t combos = grammar.combination_count();
    if (combos > 50'000'000) throw Error(ErrorCode::config, "grammar has too many combinations to enumerate");

    // Combination c maps to (template, mixed-radix slot indices).
    std::vector<std::size_t> order(combos);
    for (std::size_t i = 0; i < combos; ++i) order[i] = i;
    Rng rng(derive_seed(seed, {0x5e17}));
    for (std::size_t i = combos; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t n_docs = opts.n_docs == 0 ? combos : opts.n_docs;

    std::vector<std::vector<Piece>> parsed;
    std::vector<std::size_t> template_combos;
    for (const std::string& t : grammar.templates) {
        parsed.push_back(split_template(t));
        std::size_t n = 1;
        for (const std::string& s : distinct_slots(parsed.back())) n *= grammar.slots.at(s).size();
        template_combos.push_back(n);
    }

    Corpus c;
    c.seed = seed;
    c.source = "synthetic";
    for (std::size_t k = 0; k < n_docs; ++k) {
        std::size_t id = order[k % combos];
        const std::size_t combo_id = id;
        std::size_t ti = 0;
        while (id >= template_combos[ti]) id -= template_combos[ti++];

        std::map<std::string, std::string> assignment;
        for (const std::string& s : distinct_slots(parsed[ti])) {
            const auto& values = grammar.slots.at(s);
            assignment[s] = values[id % values.size()];
            id /= values.size();
        }
        Document d;
        d.template_index = ti;
        for (const Piece& p : parsed[ti]) {
            if (p.is_slot) {
                d.slots.push_back({p.text, assignment[p.text], d.text.size()});
                d.text += assignment[p.text];
            } else {
                d.text += p.text;
            }
        }
        d.tokens = encode(d.text);
        if (unit_hash(seed, "combo:" + std::to_string(combo_id)) < opts.heldout_fraction) {
            c.heldout.push_back(std::move(d));
        } else {
            c.train.push_back(std::move(d));
        }
    }
    return c;
}

std::vector<std::size_t> trainable_indices(const std::vector<Document>& docs) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].tokens.size() >= 2) out.push_back(i);
    }
    return out;
}

} // namespace ul2r
