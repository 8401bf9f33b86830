#pragma once

#include <stdexcept>
#include <string>

namespace pace {

enum class ErrorKind {
  Malformed,      // structurally invalid file or buffer
  OutOfRange,     // a decoded value violates its declared range
  Parse,          // unparsable token
  Value,          // parsed but semantically invalid value
  Unsupported,    // operation outside the supported envelope
  Contract,       // caller violated a precondition
  Config,         // bad configuration key or value
  Io,             // filesystem failure
  Corrupt,        // checksum/truncation failure on a container
  Incompatible,   // container does not match the expected configuration
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Malformed: return "malformed";
    case ErrorKind::OutOfRange: return "out of range";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Value: return "value error";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Contract: return "contract violation";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Corrupt: return "corrupt";
    case ErrorKind::Incompatible: return "incompatible";
  }
  return "error";
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::Contract, what);
}

}  // namespace pace
