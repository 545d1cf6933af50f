#pragma once

#include <stdexcept>
#include <string>

namespace dhc {

// Every failure mode the library reports carries one of these codes so
// callers (and tests) can distinguish them without parsing messages.
enum class Errc {
  invalid_argument,
  invalid_logits,
  shape_mismatch,
  class_too_small,
  bad_magic,
  bad_header,
  truncated_payload,
  size_mismatch,
  label_out_of_range,
  io_failure,
  step_overflow,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace dhc
