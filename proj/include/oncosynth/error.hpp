#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oncosynth {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  NonFiniteInput,
  InfeasibleGeometry,
  EmptyMask,
  OrganTooSmall,
  CorruptFile,
  Io,
  Diverged,
  UnknownCase,
  SessionClosed,
  InsufficientPool,
  ConfigKey,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code next to the message.
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

}  // namespace oncosynth
