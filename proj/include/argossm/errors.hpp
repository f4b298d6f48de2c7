#ifndef ARGOSSM_ERRORS_HPP
#define ARGOSSM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace argossm {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid model parameters (non-SPD covariance, probability outside [0,1], ...).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Geometric/domain violations (query outside grid hull, land, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Bad run configuration (missing file, missing env handle, malformed key).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed input data; carries a 1-based line number when known.
class LoadError : public Error {
 public:
  LoadError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Numerical failure during inference; carries the 1-based time index.
class InferenceError : public Error {
 public:
  InferenceError(const std::string& msg, long index = -1)
      : Error(index >= 0 ? msg + " (index " + std::to_string(index) + ")" : msg),
        index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

}  // namespace argossm

#endif
