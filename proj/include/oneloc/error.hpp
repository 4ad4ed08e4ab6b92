#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oneloc {

enum class ErrorCode {
  degenerate_point,
  invalid_size,
  parallel_configuration,
  image_too_small,
  out_of_bounds,
  no_score_map,
  insufficient_points,
  shape_mismatch,
  degenerate_direction,
  empty_box,
  empty_grid,
  no_size_evidence,
  degenerate_configuration,
  box_out_of_bounds,
  missing_prediction,
  invalid_argument,
  format_error,
  config_error,
  io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::degenerate_point: return "DegeneratePoint";
    case ErrorCode::invalid_size: return "InvalidSize";
    case ErrorCode::parallel_configuration: return "ParallelConfiguration";
    case ErrorCode::image_too_small: return "ImageTooSmall";
    case ErrorCode::out_of_bounds: return "OutOfBounds";
    case ErrorCode::no_score_map: return "NoScoreMap";
    case ErrorCode::insufficient_points: return "InsufficientPoints";
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::degenerate_direction: return "DegenerateDirection";
    case ErrorCode::empty_box: return "EmptyBox";
    case ErrorCode::empty_grid: return "EmptyGrid";
    case ErrorCode::no_size_evidence: return "NoSizeEvidence";
    case ErrorCode::degenerate_configuration: return "DegenerateConfiguration";
    case ErrorCode::box_out_of_bounds: return "BoxOutOfBounds";
    case ErrorCode::missing_prediction: return "MissingPrediction";
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::format_error: return "FormatError";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::io_error: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace oneloc
