#pragma once

#include <stdexcept>
#include <string>

namespace deepgep {

// The CLI maps these onto its exit codes (spec errors -> 2, numeric -> 3).
struct SpecError : std::invalid_argument {
  explicit SpecError(const std::string& what) : std::invalid_argument(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deepgep
