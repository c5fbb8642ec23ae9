#pragma once

#include <stdexcept>
#include <string>

namespace llmregress {

enum class ErrorCode {
  // datasets
  MALFORMED_RECORD,
  UNKNOWN_LABEL,
  DUPLICATE_ID,
  EMPTY_DATASET,
  UNKNOWN_METADATA_KEY,
  // prompts
  VERSION_CONFLICT,
  PLACEHOLDER_MISSING,
  UNKNOWN_PROMPT,
  // providers
  ENDPOINT_MISMATCH,
  HTTP_ERROR,
  RATE_LIMITED,
  REPLAY_MISS,
  // runner
  PROVIDER_FAILURE,
  DIGEST_MISMATCH,
  UNKNOWN_RUN,
  // analysis
  UNKNOWN_EXAMPLE,
  EMPTY_SLICE,
  SINGLE_SAMPLE_RUN,
  DATASET_MISMATCH,
  COVERAGE_GAP,
  NO_REGRESSIONS,
  // regress / driftsim
  INFEASIBLE,
  NONZERO_DRIFT,
  ZERO_DRIFT,
  // shared
  INVALID_ARGUMENT,
  RECORD_CORRUPT,
  IO_ERROR,
};

const char* error_code_name(ErrorCode code);

// The one exception type the library throws. `code()` is stable API; the
// message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace llmregress
