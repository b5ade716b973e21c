#pragma once

#include <stdexcept>
#include <string>

namespace detext {

// Error taxonomy mapped onto process exit codes by the CLI:
// config -> 1, data -> 2, transport/persistence -> 3.
enum class ErrorKind { config, data, transport, persistence };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct TransportError : Error {
  TransportError(const std::string& what, int last_status, bool transient)
      : Error(ErrorKind::transport, what),
        last_status(last_status),
        transient(transient) {}

  int last_status;   // HTTP status of the last attempt, 0 for network-level failures
  bool transient;    // whether a retry may succeed
};

struct PersistenceError : Error {
  explicit PersistenceError(const std::string& what)
      : Error(ErrorKind::persistence, what) {}
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::transport:
    case ErrorKind::persistence: return 3;
  }
  return 1;
}

}  // namespace detext
