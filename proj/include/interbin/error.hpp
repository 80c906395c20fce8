#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace interbin {

enum class ErrorCode {
  // asm normalization
  EmptyLine,
  UnbalancedBrackets,
  UnknownArchitecture,
  EmptyCorpus,
  // tensor engine
  ShapeMismatch,
  NonFiniteInput,
  NotScalar,
  IndexOutOfRange,
  // layers and model
  AllPaddingInstruction,
  EmptySequence,
  // training
  NonFiniteGradient,
  EmptyDataset,
  InsufficientNegatives,
  VersionMismatch,
  HashMismatch,
  // evaluation
  EmptyInput,
  SingleClass,
  NoPositive,
  TooShort,
  // data / cli
  ParseError,
  MissingField,
  ValidationError,
  NoCrossArchCounterpart,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Process exit status for a failure: 2 configuration, 3 data, 4 runtime.
int exit_code(ErrorCode code);
// Short hint on how to fix the input that caused `code`.
std::string_view remediation(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace interbin
