#pragma once

// Byte-level vocabulary with reserved special tokens.
//
// Layout (V = 361):
//   0..255    one token per byte value
//   256       <pad>
//   257       <eos>
//   258       [S2S]   sequential (prefix-LM) denoiser mode
//   259       [NLU]   regular span-corruption mode
//   260       [NLG]   extreme span-corruption mode
//   261..360  sentinels; <extra_id_k> is id 360 - k

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ul2r {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

namespace vocab {

inline constexpr TokenId kByteCount = 256;
inline constexpr TokenId kPad = 256;
inline constexpr TokenId kEos = 257;
inline constexpr TokenId kModeS2S = 258;
inline constexpr TokenId kModeNLU = 259;
inline constexpr TokenId kModeNLG = 260;
inline constexpr TokenId kSentinelCount = 100;
inline constexpr TokenId kSize = 361;

enum class Role { byte, pad, eos, mode, sentinel };

Role role_of(TokenId id);

bool is_byte(TokenId id);
bool is_sentinel(TokenId id);
bool is_mode(TokenId id);

// <extra_id_k>; throws unknown_special for k outside [0, 100).
TokenId sentinel(int k);

// Inverse of sentinel(); requires is_sentinel(id).
int sentinel_index(TokenId id);

// Looks up a special token by its rendered or short name: "<pad>", "pad",
// "<eos>", "eos", "[S2S]", "s2s", "[NLU]", "nlu", "[NLG]", "nlg",
// "<extra_id_k>". Throws unknown_special otherwise.
TokenId special_id(std::string_view name);

// Stable description of the id layout; its hash is stored in checkpoints.
std::string layout_description();
std::uint64_t layout_hash();

} // namespace vocab

TokenSeq encode(std::string_view text);

// Throws out_of_vocab for ids outside [0, V).
std::string decode(const TokenSeq& seq);

// Like encode(), but recognises literal "<extra_id_k>" markers and emits the
// sentinel id in their place. Used for infill prompts typed on a command line.
TokenSeq encode_with_sentinels(std::string_view text);

} // namespace ul2r
