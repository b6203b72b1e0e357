#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mms {

// Every failure surfaced by the library carries one of these codes so callers
// (and the CLI exit-code mapping) can tell error paths apart without parsing
// message text.
enum class ErrorCode {
    dimension_mismatch,
    non_finite,
    invalid_label,
    invalid_argument,
    degenerate_boundary,
    io,
    bad_magic,
    truncated,
    count_mismatch,
    parse,
    ragged_row,
    empty_input,
    config,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace mms
