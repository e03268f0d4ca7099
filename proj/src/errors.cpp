#include "taskalign/errors.hpp"

namespace taskalign {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::CycleInIntentTree: return "CycleInIntentTree";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownIntentId: return "UnknownIntentId";
    case ErrorCode::CycleWouldForm: return "CycleWouldForm";
    case ErrorCode::ConflictingUpdates: return "ConflictingUpdates";
    case ErrorCode::UnparseableProposal: return "UnparseableProposal";
    case ErrorCode::InvalidFocus: return "InvalidFocus";
    case ErrorCode::NotASupernode: return "NotASupernode";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::AuthFailure: return "AuthFailure";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::GatewayError: return "GatewayError";
    case ErrorCode::InvalidTripleOutput: return "InvalidTripleOutput";
    case ErrorCode::ExtractionFailed: return "ExtractionFailed";
    case ErrorCode::DegenerateTree: return "DegenerateTree";
    case ErrorCode::InvalidVerdict: return "InvalidVerdict";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ZeroRate: return "ZeroRate";
    case ErrorCode::InvalidEdit: return "InvalidEdit";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_gateway_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::Timeout:
    case ErrorCode::AuthFailure:
    case ErrorCode::RateLimited:
    case ErrorCode::MalformedResponse:
    case ErrorCode::GatewayError:
      return true;
    default:
      return false;
  }
}

}  // namespace taskalign
