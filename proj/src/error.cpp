#include "mms/error.hpp"

namespace mms {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::dimension_mismatch: return "dimension_mismatch";
        case ErrorCode::non_finite: return "non_finite";
        case ErrorCode::invalid_label: return "invalid_label";
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::degenerate_boundary: return "degenerate_boundary";
        case ErrorCode::io: return "io";
        case ErrorCode::bad_magic: return "bad_magic";
        case ErrorCode::truncated: return "truncated";
        case ErrorCode::count_mismatch: return "count_mismatch";
        case ErrorCode::parse: return "parse";
        case ErrorCode::ragged_row: return "ragged_row";
        case ErrorCode::empty_input: return "empty_input";
        case ErrorCode::config: return "config";
    }
    return "unknown";
}

}  // namespace mms
