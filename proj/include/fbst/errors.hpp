#pragma once

#include <stdexcept>
#include <string>

namespace fbst {

// Bad argument or violated precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration; fatal for the command being run.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// I/O failure (unreadable/unwritable file, bad PNG).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric is not defined for the given input (e.g. single-class mask).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Error raised inside a pipeline stage, tagged with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace fbst
