#pragma once

#include <stdexcept>
#include <string>

namespace dualsys {

/// Broad failure classes. The CLI maps each one onto a process exit code.
enum class ErrorKind {
  usage = 1,      // bad flags or config
  validation = 2, // input data violates a contract
  backend = 3,    // transport, capability or replay failures
  internal = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

/// Statistical test has no information to work with (e.g. zero variance everywhere).
struct DegenerateTestError : Error {
  explicit DegenerateTestError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

struct TransportError : Error {
  explicit TransportError(const std::string& what) : Error(ErrorKind::backend, what) {}
};

/// The endpoint answered but cannot provide what we need (logprobs).
struct CapabilityError : Error {
  explicit CapabilityError(const std::string& what) : Error(ErrorKind::backend, what) {}
};

struct CacheMissError : Error {
  CacheMissError(const std::string& digest, const std::string& what)
      : Error(ErrorKind::backend, what), digest_(digest) {}
  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

/// One side of a dual-system query failed; `side()` is "s1" or "s2".
struct ArbitrationError : Error {
  ArbitrationError(const std::string& side, ErrorKind cause, const std::string& what)
      : Error(cause, what), side_(side) {}
  const std::string& side() const noexcept { return side_; }

 private:
  std::string side_;
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::internal, what) {}
};

}  // namespace dualsys
