#include "ul2r/errors.hpp"

namespace ul2r {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::out_of_vocab: return "out_of_vocab";
    case ErrorCode::unknown_special: return "unknown_special";
    case ErrorCode::config: return "config";
    case ErrorCode::input_too_short: return "input_too_short";
    case ErrorCode::sentinel_exhausted: return "sentinel_exhausted";
    case ErrorCode::malformed_example: return "malformed_example";
    case ErrorCode::example_too_long: return "example_too_long";
    case ErrorCode::empty_loss: return "empty_loss";
    case ErrorCode::context_overflow: return "context_overflow";
    case ErrorCode::parse: return "parse";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::corrupt_checkpoint: return "corrupt_checkpoint";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::incompatible_vocab: return "incompatible_vocab";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::extrapolation: return "extrapolation";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::io: return "io";
    case ErrorCode::usage: return "usage";
    }
    return "unknown";
}

} // namespace ul2r
