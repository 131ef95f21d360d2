#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace story {

enum class ErrorCode {
  dimension_mismatch,
  non_finite,
  empty_input,
  invalid_argument,
  out_of_range,
  io,
  short_read,
  bad_magic,
  bad_version,
  invalid_dimension,
  parse,
  config_conflict,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace story
