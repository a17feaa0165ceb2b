/*
 * Copyright 2026 The dpfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef DPFED_ERROR_HPP_
#define DPFED_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace dpfed {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kIdxMagic,
  kIdxTruncated,
  kIdxCountMismatch,
  kCsvFormat,
  kInfeasiblePartition,
  kEmptyBatch,
  kDuplicateReply,
  kReplyCount,
  kUnboundedHorizon,
  kConfig,
  kRuntime,
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kIdxMagic: return "idx_magic";
    case ErrorCode::kIdxTruncated: return "idx_truncated";
    case ErrorCode::kIdxCountMismatch: return "idx_count_mismatch";
    case ErrorCode::kCsvFormat: return "csv_format";
    case ErrorCode::kInfeasiblePartition: return "infeasible_partition";
    case ErrorCode::kEmptyBatch: return "empty_batch";
    case ErrorCode::kDuplicateReply: return "duplicate_reply";
    case ErrorCode::kReplyCount: return "reply_count";
    case ErrorCode::kUnboundedHorizon: return "unbounded_horizon";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kRuntime: return "runtime";
  }
  return "unknown";
}

// Every failure in the library is reported through this type; `code()`
// distinguishes the cases callers are expected to branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void Require(bool condition, const std::string& message,
                    ErrorCode code = ErrorCode::kInvalidArgument) {
  if (!condition) throw Error(code, message);
}

}  // namespace dpfed

#endif  // DPFED_ERROR_HPP_
