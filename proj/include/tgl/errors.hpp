#pragma once

#include <stdexcept>
#include <string>

namespace tgl {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCategory : int {
  Config = 2,
  Data = 3,
  Training = 4,
  Transport = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), category_(cat) {}
  ErrorCategory category() const { return category_; }
  int exit_code() const { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(ErrorCategory::Config, msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ErrorCategory::Data, msg) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error(ErrorCategory::Training, msg) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& msg) : Error(ErrorCategory::Transport, msg) {}
};

}  // namespace tgl
