#pragma once

#include <stdexcept>
#include <string>

namespace pricesim {

/// Bad user-supplied configuration (m > n, empty interval, unknown preset, ...).
/// `path` names the offending field, e.g. "instance.m".
class ConfigError : public std::invalid_argument {
public:
  ConfigError(std::string path, const std::string& message)
      : std::invalid_argument(path.empty() ? message : path + ": " + message),
        path_(std::move(path)), message_(message) {}

  const std::string& path() const noexcept { return path_; }
  /// The message without the path prefix.
  const std::string& message() const noexcept { return message_; }

private:
  std::string path_;
  std::string message_;
};

/// Input violates a numerical precondition (asymmetric matrix, bad dimension).
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// The likelihood solver produced a non-finite objective or failed to converge.
class EstimationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A metric is undefined for the given trace (e.g. zero oracle revenue).
class UndefinedMetric : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

} // namespace pricesim
