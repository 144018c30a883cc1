#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ul2r {

enum class ErrorCode {
    out_of_vocab,
    unknown_special,
    config,
    input_too_short,
    sentinel_exhausted,
    malformed_example,
    example_too_long,
    empty_loss,
    context_overflow,
    parse,
    precondition,
    corrupt_checkpoint,
    version_mismatch,
    incompatible_vocab,
    non_finite,
    extrapolation,
    empty_input,
    io,
    usage,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type; `code()` is stable and
// is what the CLI prints on its machine-readable error line.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace ul2r
