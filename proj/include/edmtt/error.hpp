// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edmtt {

enum class ErrorKind {
  MissingColumn,
  NonFiniteValue,
  EmptySequence,
  OutOfRangeLabel,
  SequenceTooShort,
  DegenerateClassDistribution,
  EmptyDataset,
  EmptyBatch,
  DimensionMismatch,
  LengthMismatch,
  ShapeMismatch,
  NonFiniteActivation,
  UnsupportedVersion,
  CorruptCheckpoint,
  BudgetExceedsSpace,
  InvalidDistribution,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::OutOfRangeLabel: return "OutOfRangeLabel";
    case ErrorKind::SequenceTooShort: return "SequenceTooShort";
    case ErrorKind::DegenerateClassDistribution: return "DegenerateClassDistribution";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::BudgetExceedsSpace: return "BudgetExceedsSpace";
    case ErrorKind::InvalidDistribution: return "InvalidDistribution";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind so
/// callers (the CLI in particular) can map it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace edmtt
