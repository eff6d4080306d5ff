// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ltk {

// Error categories double as process exit codes at the CLI boundary.
enum class ErrorCategory : int {
  config = 2,      // invalid hyperparameter or option combination
  parse = 3,       // config file syntax or type error
  dimension = 4,   // tensor shape / batch size mismatch
  usage = 5,       // API called in a state it does not support
  data = 6,        // dataset integrity (pairing, labels, degenerate stats)
  io = 7,          // file read/write failure
  training = 8,    // runtime failure during optimization (NaN loss)
  validation = 9,  // input values violate a documented precondition
};

const char* error_category_name(ErrorCategory cat);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(std::string(error_category_name(cat)) + ": " + msg),
        category_(cat) {}

  ErrorCategory category() const { return category_; }
  int exit_code() const { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void raise(ErrorCategory cat, const std::string& msg) {
  throw Error(cat, msg);
}

inline const char* error_category_name(ErrorCategory cat) {
  switch (cat) {
    case ErrorCategory::config: return "config error";
    case ErrorCategory::parse: return "parse error";
    case ErrorCategory::dimension: return "dimension error";
    case ErrorCategory::usage: return "usage error";
    case ErrorCategory::data: return "data error";
    case ErrorCategory::io: return "io error";
    case ErrorCategory::training: return "training error";
    case ErrorCategory::validation: return "validation error";
  }
  return "error";
}

}  // namespace ltk
