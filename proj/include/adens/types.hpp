#ifndef ADENS_TYPES_HPP
#define ADENS_TYPES_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace adens {

using TokenId = std::uint32_t;

// Raised for bad or missing input data (exit code 2 at the CLI).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a computation produces non-finite values (exit code 3 at the CLI).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace adens

#endif  // ADENS_TYPES_HPP
