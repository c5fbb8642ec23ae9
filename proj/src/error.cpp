#include "llmregress/error.hpp"

namespace llmregress {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MALFORMED_RECORD: return "MALFORMED_RECORD";
    case ErrorCode::UNKNOWN_LABEL: return "UNKNOWN_LABEL";
    case ErrorCode::DUPLICATE_ID: return "DUPLICATE_ID";
    case ErrorCode::EMPTY_DATASET: return "EMPTY_DATASET";
    case ErrorCode::UNKNOWN_METADATA_KEY: return "UNKNOWN_METADATA_KEY";
    case ErrorCode::VERSION_CONFLICT: return "VERSION_CONFLICT";
    case ErrorCode::PLACEHOLDER_MISSING: return "PLACEHOLDER_MISSING";
    case ErrorCode::UNKNOWN_PROMPT: return "UNKNOWN_PROMPT";
    case ErrorCode::ENDPOINT_MISMATCH: return "ENDPOINT_MISMATCH";
    case ErrorCode::HTTP_ERROR: return "HTTP_ERROR";
    case ErrorCode::RATE_LIMITED: return "RATE_LIMITED";
    case ErrorCode::REPLAY_MISS: return "REPLAY_MISS";
    case ErrorCode::PROVIDER_FAILURE: return "PROVIDER_FAILURE";
    case ErrorCode::DIGEST_MISMATCH: return "DIGEST_MISMATCH";
    case ErrorCode::UNKNOWN_RUN: return "UNKNOWN_RUN";
    case ErrorCode::UNKNOWN_EXAMPLE: return "UNKNOWN_EXAMPLE";
    case ErrorCode::EMPTY_SLICE: return "EMPTY_SLICE";
    case ErrorCode::SINGLE_SAMPLE_RUN: return "SINGLE_SAMPLE_RUN";
    case ErrorCode::DATASET_MISMATCH: return "DATASET_MISMATCH";
    case ErrorCode::COVERAGE_GAP: return "COVERAGE_GAP";
    case ErrorCode::NO_REGRESSIONS: return "NO_REGRESSIONS";
    case ErrorCode::INFEASIBLE: return "INFEASIBLE";
    case ErrorCode::NONZERO_DRIFT: return "NONZERO_DRIFT";
    case ErrorCode::ZERO_DRIFT: return "ZERO_DRIFT";
    case ErrorCode::INVALID_ARGUMENT: return "INVALID_ARGUMENT";
    case ErrorCode::RECORD_CORRUPT: return "RECORD_CORRUPT";
    case ErrorCode::IO_ERROR: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace llmregress
