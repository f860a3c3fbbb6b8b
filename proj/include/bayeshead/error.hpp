#pragma once

#include <stdexcept>
#include <string>

namespace bayeshead {

enum class ErrorKind {
  invalid_input,
  invalid_parameter,
  shape,
  numeric,
  wrong_variant,
  degenerate_data,
  bandwidth_undefined,
  io,
  parse,
  schema,
  corrupt_archive,
  version,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::invalid_parameter: return "invalid parameter";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::wrong_variant: return "wrong model variant";
    case ErrorKind::degenerate_data: return "degenerate data";
    case ErrorKind::bandwidth_undefined: return "bandwidth undefined";
    case ErrorKind::io: return "io error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::schema: return "schema error";
    case ErrorKind::corrupt_archive: return "corrupt archive";
    case ErrorKind::version: return "version error";
  }
  return "error";
}

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace bayeshead
