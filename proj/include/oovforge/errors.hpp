#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oovforge {

// Base of every error the library raises. exit_code() is the process status
// the command-line front end reports for this family of failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Malformed call (wrong shape class, unfitted model, non-scalar backward...).
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, 1) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what, 1) {}
};

// Non-finite values, zero norms, singular systems.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, int exit_code = 1) : Error(what, exit_code) {}
};

// Invalid model input (empty or over-long sequence).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what, 1) {}
};

class IngestionError : public Error {
 public:
  explicit IngestionError(const std::string& what) : Error(what, 2) {}
};

class ParseError : public IngestionError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : IngestionError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what) : Error(what, 1) {}
};

class EpisodeError : public Error {
 public:
  explicit EpisodeError(const std::string& what) : Error(what, 1) {}
};

// Corrupted or mismatched binary container.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(what, 2) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(what, 3) {}
};

class AdaptationError : public Error {
 public:
  explicit AdaptationError(const std::string& what) : Error(what, 4) {}
};

class InferenceError : public Error {
 public:
  explicit InferenceError(const std::string& what) : Error(what, 5) {}
};

class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what) : Error(what, 6) {}
};

}  // namespace oovforge
