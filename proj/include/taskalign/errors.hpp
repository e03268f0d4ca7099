#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace taskalign {

enum class ErrorCode {
  // document / model validation
  MalformedDocument,
  DanglingReference,
  CycleInIntentTree,
  DuplicateId,
  // intent tracking
  UnknownIntentId,
  CycleWouldForm,
  ConflictingUpdates,
  UnparseableProposal,
  // simplification
  InvalidFocus,
  NotASupernode,
  // gateway
  Timeout,
  AuthFailure,
  RateLimited,
  MalformedResponse,
  GatewayError,
  // extraction / playground
  InvalidTripleOutput,
  ExtractionFailed,
  DegenerateTree,
  InvalidVerdict,
  // metrics
  EmptyText,
  EmptyCorpus,
  ZeroRate,
  // session
  InvalidEdit,
  PreconditionFailed,
  UnknownSession,
  // plumbing
  ConfigError,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

/// True for failures that originate at a model backend (network, auth,
/// throttling, unusable replies).
bool is_gateway_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace taskalign
