// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace eyedent {

/// Error categories. The CLI maps these onto exit codes: usage/config
/// problems exit with 2, everything else with 1.
enum class ErrorCode {
  parse,                 ///< malformed input data (CSV rows, JSON)
  validation,            ///< value outside its contract (config domains, shapes of domain objects)
  statistics_undefined,  ///< z-score statistics cannot be computed (no supra-threshold samples, sd = 0)
  shape,                 ///< tensor shape mismatch
  divergence,            ///< non-finite loss or gradient during training
  io,                    ///< filesystem failure
  checkpoint_version,    ///< checkpoint/template written by an incompatible format version
  checkpoint_checksum,   ///< checkpoint trailer does not match its content
  checkpoint_truncated,  ///< checkpoint ends before its declared payload
  untrained,             ///< inference requested on a bundle that has not completed training
  usage,                 ///< bad command-line invocation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::validation: return "validation";
    case ErrorCode::statistics_undefined: return "statistics_undefined";
    case ErrorCode::shape: return "shape";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::io: return "io";
    case ErrorCode::checkpoint_version: return "checkpoint_version";
    case ErrorCode::checkpoint_checksum: return "checkpoint_checksum";
    case ErrorCode::checkpoint_truncated: return "checkpoint_truncated";
    case ErrorCode::untrained: return "untrained";
    case ErrorCode::usage: return "usage";
  }
  return "unknown";
}

}  // namespace eyedent
