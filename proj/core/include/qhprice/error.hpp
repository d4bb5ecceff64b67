#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qhprice {

enum class ErrorKind {
  Config,
  Parse,
  Schema,
  Integrity,
  Data,
  Numerical,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// 0 success, 1 config, 2 data (parse/schema/integrity/data/io), 3 numerical.
int exit_code(ErrorKind kind);

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace qhprice
