#include "interbin/error.hpp"

namespace interbin {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyLine: return "EmptyLine";
    case ErrorCode::UnbalancedBrackets: return "UnbalancedBrackets";
    case ErrorCode::UnknownArchitecture: return "UnknownArchitecture";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::AllPaddingInstruction: return "AllPaddingInstruction";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InsufficientNegatives: return "InsufficientNegatives";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoPositive: return "NoPositive";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::NoCrossArchCounterpart: return "NoCrossArchCounterpart";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return 2;
    case ErrorCode::ShapeMismatch:
    case ErrorCode::NonFiniteInput:
    case ErrorCode::NotScalar:
    case ErrorCode::IndexOutOfRange:
    case ErrorCode::NonFiniteGradient:
      return 4;
    default:
      return 3;
  }
}

std::string_view remediation(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyLine: return "remove blank instruction lines from the record";
    case ErrorCode::UnbalancedBrackets: return "check the disassembly for truncated memory operands";
    case ErrorCode::UnknownArchitecture: return "use x86, arm or mips, and rebuild the dictionaries if a new arch was added";
    case ErrorCode::EmptyCorpus: return "the records file has no instructions";
    case ErrorCode::ShapeMismatch: return "the model configuration does not match the checkpoint or input";
    case ErrorCode::NonFiniteInput: return "inputs contain NaN or infinity";
    case ErrorCode::NotScalar: return "internal error: loss is not a scalar";
    case ErrorCode::IndexOutOfRange: return "internal error: index out of range";
    case ErrorCode::AllPaddingInstruction: return "an instruction renders to no characters";
    case ErrorCode::EmptySequence: return "a function has no instructions";
    case ErrorCode::NonFiniteGradient: return "lower train.lr or resume from an earlier checkpoint";
    case ErrorCode::EmptyDataset: return "the selected split has no examples; adjust the split ratios";
    case ErrorCode::InsufficientNegatives: return "lower data.num_neg or add identities to the split";
    case ErrorCode::VersionMismatch: return "the file was written by an incompatible version";
    case ErrorCode::HashMismatch: return "use the dictionaries the checkpoint was trained with";
    case ErrorCode::EmptyInput: return "nothing to score";
    case ErrorCode::SingleClass: return "AUC needs both labels in the split";
    case ErrorCode::NoPositive: return "a ranking group lacks its positive";
    case ErrorCode::TooShort: return "text is shorter than the n-gram size";
    case ErrorCode::ParseError: return "fix the malformed line reported above";
    case ErrorCode::MissingField: return "add the missing field to every record";
    case ErrorCode::ValidationError: return "fix the record or pair file contents";
    case ErrorCode::NoCrossArchCounterpart: return "records must cover at least two architectures";
    case ErrorCode::ConfigError: return "check the config file and flags (see --help)";
    case ErrorCode::IoError: return "check that the path exists and is readable";
  }
  return "";
}

}  // namespace interbin
