#pragma once

#include <stdexcept>
#include <string>

namespace skillforge {

/// Precondition violated by the caller (bad shape, bad range, NaN input).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reset could not place the plug without penetration.
class TaskInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Disassembly path generation failed to clear the socket.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed persisted file (bad magic, truncated payload, bad JSON).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed file written by an unsupported format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Skill library on disk or in memory violates its invariants.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Insertion of an id that already exists.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace skillforge
