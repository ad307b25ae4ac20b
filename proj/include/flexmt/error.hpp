// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace flexmt {

enum class ErrorKind {
  InvalidArgument,  // bad flag/config value
  Dimension,        // shape mismatch
  Validation,       // record/vocabulary constraint violated
  Parse,            // malformed input file
  Format,           // bad magic/version/truncation
  Incompatible,     // checkpoint does not fit the model
  Io,               // filesystem failure
  Contract,         // API misuse (double backward, non-scalar loss, NaN/Inf)
  UndefinedMetric,  // metric denominator is zero
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace flexmt
