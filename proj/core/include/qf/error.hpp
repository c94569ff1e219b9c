#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qf {

enum class ErrorCode {
  InvalidArgument,
  UnsupportedFormat,
  DecodeError,
  EmptyDocument,
  IoError,
  EndpointUnreachable,
  EmbeddingRefused,
  DimensionMismatch,
  DuplicateChunkId,
  EmptyIndex,
  CorruptIndex,
  ContextOverflow,
  GenerationRefused,
  EmptyInput,
  JudgeUnparseable,
  UnknownCode,
  NotFound,
  Conflict,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> error_code_from_string(std::string_view s) noexcept;

// Every failure surfaced by the engine carries one of the codes above; the
// CLI and the HTTP service map them onto exit codes and status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qf
