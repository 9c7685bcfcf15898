#pragma once

#include <stdexcept>
#include <string>

namespace fedlt {

/// Error taxonomy shared by every module. The kind decides the process exit
/// code at the C API boundary: Config maps to 2, everything else to 3.
enum class ErrorKind {
  Dimension,    // tensor/matrix shape mismatch
  Contract,     // API precondition violated (missing grad, non-scalar loss, ...)
  Parameter,    // bad hyperparameter or argument value
  Domain,       // numeric domain violation (log of negative, ...)
  Numeric,      // non-finite values where finite ones are required
  Aggregation,  // incompatible parameter manifests
  Config,       // configuration file / key errors
  Io,           // file read/write failures
  Parse,        // malformed input file
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_error(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace fedlt
