#include "ul2r/tokenizer.hpp"

#include <charconv>

#include "ul2r/errors.hpp"

namespace ul2r {
namespace vocab {

Role role_of(TokenId id) {
    if (id < 0 || id >= kSize) {
        throw Error(ErrorCode::out_of_vocab, "token id " + std::to_string(id) + " outside vocabulary");
    }
    if (id < kByteCount) return Role::byte;
    if (id == kPad) return Role::pad;
    if (id == kEos) return Role::eos;
    if (id <= kModeNLG) return Role::mode;
    return Role::sentinel;
}

bool is_byte(TokenId id) { return id >= 0 && id < kByteCount; }
bool is_sentinel(TokenId id) { return id >= kSize - kSentinelCount && id < kSize; }
bool is_mode(TokenId id) { return id >= kModeS2S && id <= kModeNLG; }

TokenId sentinel(int k) {
    if (k < 0 || k >= kSentinelCount) {
        throw Error(ErrorCode::unknown_special, "sentinel index " + std::to_string(k) + " outside [0, 100)");
    }
    return kSize - 1 - k;
}

int sentinel_index(TokenId id) { return kSize - 1 - id; }

namespace {

constexpr std::string_view kSentinelPrefix = "<extra_id_";

// Parses "<extra_id_k>" at the start of `text`; returns the consumed length or 0.
std::size_t parse_sentinel(std::string_view text, int& k) {
    if (!text.starts_with(kSentinelPrefix)) return 0;
    const char* first = text.data() + kSentinelPrefix.size();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, k);
    if (ec != std::errc() || ptr == first || ptr == last || *ptr != '>') return 0;
    return static_cast<std::size_t>(ptr - text.data()) + 1;
}

} // namespace

TokenId special_id(std::string_view name) {
    if (name == "<pad>" || name == "pad") return kPad;
    if (name == "<eos>" || name == "eos") return kEos;
    if (name == "[S2S]" || name == "s2s") return kModeS2S;
    if (name == "[NLU]" || name == "nlu") return kModeNLU;
    if (name == "[NLG]" || name == "nlg") return kModeNLG;
    int k = 0;
    if (parse_sentinel(name, k) == name.size()) {
        return sentinel(k);
    }
    throw Error(ErrorCode::unknown_special, "unknown special token '" + std::string(name) + "'");
}

std::string layout_description() {
    return "bytes=0..255;pad=256;eos=257;s2s=258;nlu=259;nlg=260;sentinels=100:descending_from=360;size=361";
}

std::uint64_t layout_hash() {
    // FNV-1a, 64 bit.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : layout_description()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace vocab

TokenSeq encode(std::string_view text) {
    TokenSeq out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        out.push_back(static_cast<TokenId>(c));
    }
    return out;
}

std::string decode(const TokenSeq& seq) {
    std::string out;
    out.reserve(seq.size());
    for (TokenId id : seq) {
        switch (vocab::role_of(id)) {
        case vocab::Role::byte: out.push_back(static_cast<char>(static_cast<unsigned char>(id))); break;
        case vocab::Role::pad: out += "<pad>"; break;
        case vocab::Role::eos: out += "<eos>"; break;
        case vocab::Role::mode:
            out += id == vocab::kModeS2S ? "[S2S]" : id == vocab::kModeNLU ? "[NLU]" : "[NLG]";
            break;
        case vocab::Role::sentinel:
            out += "<extra_id_" + std::to_string(vocab::sentinel_index(id)) + ">";
            break;
        }
    }
    return out;
}

TokenSeq encode_with_sentinels(std::string_view text) {
    TokenSeq out;
    std::size_t i = 0;
    while (i < text.size()) {
        int k = 0;
        if (std::size_t used = vocab::parse_sentinel(text.substr(i), k); used != 0) {
            out.push_back(vocab::sentinel(k));
            i += used;
        } else {
            out.push_back(static_cast<TokenId>(static_cast<unsigned char>(text[i])));
            ++i;
        }
    }
    return out;
}

} // namespace ul2r
