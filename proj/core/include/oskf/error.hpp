#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace oskf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied data that violates a documented precondition or a file
/// that cannot be parsed. The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class DegenerateRotation : public InputError {
 public:
  using InputError::InputError;
};

class DegenerateDirection : public InputError {
 public:
  using InputError::InputError;
};

class InvalidCrop : public InputError {
 public:
  using InputError::InputError;
};

class BehindCamera : public InputError {
 public:
  BehindCamera(std::size_t index, double depth);
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class InvalidK : public InputError {
 public:
  using InputError::InputError;
};

class TooFewPoints : public InputError {
 public:
  using InputError::InputError;
};

class BadWidth : public InputError {
 public:
  using InputError::InputError;
};

class EmptyModel : public InputError {
 public:
  using InputError::InputError;
};

class EmptyList : public InputError {
 public:
  using InputError::InputError;
};

class LengthMismatch : public InputError {
 public:
  using InputError::InputError;
};

class ShapeMismatch : public InputError {
 public:
  using InputError::InputError;
};

/// Parse failure with a 1-based line number (0 when not line oriented).
class ParseError : public InputError {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what);
  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Predictions and ground truth do not cover the same instances.
class KeyMismatch : public InputError {
 public:
  explicit KeyMismatch(std::vector<std::string> unmatched);
  const std::vector<std::string>& unmatched() const noexcept { return unmatched_; }

 private:
  std::vector<std::string> unmatched_;
};

/// Training produced a non-finite loss.
class DivergenceDetected : public Error {
 public:
  DivergenceDetected(std::size_t step, double loss);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace oskf
