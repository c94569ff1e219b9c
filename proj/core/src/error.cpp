#include "qf/error.hpp"

namespace qf {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::EmbeddingRefused: return "EmbeddingRefused";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateChunkId: return "DuplicateChunkId";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::GenerationRefused: return "GenerationRefused";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::JudgeUnparseable: return "JudgeUnparseable";
    case ErrorCode::UnknownCode: return "UnknownCode";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
  }
  return "Unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view s) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::Conflict); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == s) return code;
  }
  return std::nullopt;
}

}  // namespace qf
