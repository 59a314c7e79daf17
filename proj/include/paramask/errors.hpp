#pragma once

#include <stdexcept>
#include <string>

namespace paramask {

// Errors caused by user-supplied inputs (configs, corpus files, CLI flags).
// The CLI maps these to exit code 1; anything else exits 2.
struct UserError : std::runtime_error {
  explicit UserError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace paramask
