#pragma once

#include <stdexcept>
#include <string>

namespace seqx {

enum class ErrorKind {
  kInput,      // bad arguments, bad data, schema violations
  kProtocol,   // malformed backend response
  kTransport,  // backend unreachable; retryable
  kShape,      // tensor dimensions disagree with the model
  kState,      // operation called out of order
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::kInput, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kShape, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorKind::kState, what) {}
};

class ProtocolError : public Error {
 public:
  ProtocolError(std::string backend, const std::string& what)
      : Error(ErrorKind::kProtocol, backend + ": " + what), backend_(std::move(backend)) {}
  const std::string& backend() const { return backend_; }

 private:
  std::string backend_;
};

/// Transport failure talking to a backend. Always retryable.
class TransportError : public Error {
 public:
  TransportError(std::string backend, const std::string& what)
      : Error(ErrorKind::kTransport, backend + ": " + what), backend_(std::move(backend)) {}
  const std::string& backend() const { return backend_; }
  bool retryable() const { return true; }

 private:
  std::string backend_;
};

/// Process exit code for an error kind: 2 input/schema, 3 backend, 4 internal.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput:
    case ErrorKind::kShape:
      return 2;
    case ErrorKind::kProtocol:
    case ErrorKind::kTransport:
      return 3;
    default:
      return 4;
  }
}

}  // namespace seqx
