#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or axis problems in tensor math.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Out-of-range argument (dropout rate, digit counts, positions, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

// Misuse of a gradient tape (e.g. backward run twice).
class TapeError : public Error {
 public:
  using Error::Error;
};

// Stored values disagree with each other (wrong product, mismatched lengths).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// A sampling request asks for more distinct items than exist.
class ExhaustionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Context window full. Carries whatever was generated before the overflow.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, std::vector<int> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<int>& partial_output() const noexcept { return partial_; }

 private:
  std::vector<int> partial_;
};

class ScriptExhaustedError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointHeaderError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointIntegrityError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Raised when the training loss stops being finite.
class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& what, std::size_t last_finite_step, double last_finite_loss)
      : Error(what), last_finite_step_(last_finite_step), last_finite_loss_(last_finite_loss) {}
  std::size_t last_finite_step() const noexcept { return last_finite_step_; }
  double last_finite_loss() const noexcept { return last_finite_loss_; }

 private:
  std::size_t last_finite_step_;
  double last_finite_loss_;
};

// A grid cell could not be completed; the message names the cell and problem.
class GridCellError : public Error {
 public:
  using Error::Error;
};

}  // namespace dprobe
