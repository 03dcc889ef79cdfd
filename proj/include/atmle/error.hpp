#pragma once

#include <stdexcept>
#include <string>

namespace atmle {

// Error categories mirror the CLI exit-code contract:
//   config -> 2, runtime -> 3, statistical precondition -> 4.
enum class ErrorKind { config, runtime, precondition };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

struct PreconditionError : Error {
  explicit PreconditionError(const std::string& msg)
      : Error(ErrorKind::precondition, msg) {}
};

// Likelihood unbounded: some column separates the labels.
struct SeparationError : Error {
  explicit SeparationError(const std::string& msg, std::string column)
      : Error(ErrorKind::runtime, msg), column(std::move(column)) {}
  std::string column;
};

// Design matrix not full column rank.
struct RankError : Error {
  RankError(const std::string& msg, std::vector<std::string> cols)
      : Error(ErrorKind::runtime, msg), redundant_columns(std::move(cols)) {}
  std::vector<std::string> redundant_columns;
};

struct PositivityError : Error {
  explicit PositivityError(const std::string& msg)
      : Error(ErrorKind::precondition, msg) {}
};

struct PoolExhaustedError : Error {
  explicit PoolExhaustedError(const std::string& msg)
      : Error(ErrorKind::precondition, msg) {}
};

struct SingularInformationError : Error {
  explicit SingularInformationError(const std::string& msg)
      : Error(ErrorKind::runtime, msg) {}
};

}  // namespace atmle
