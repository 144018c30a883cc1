#pragma once

#include <filesystem>
#include <string>

#include "ul2r/rng.hpp"
#include "ul2r/tokenizer.hpp"

namespace ul2r::test {

inline TokenSeq random_bytes(Rng& rng, std::size_t n) {
    TokenSeq s(n);
    for (TokenId& t : s) t = static_cast<TokenId>(rng.uniform_int(0, 255));
    return s;
}

inline std::filesystem::path tmp_dir(const std::string& name) {
    const std::filesystem::path p = std::filesystem::path(UL2R_TEST_TMP) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace ul2r::test
