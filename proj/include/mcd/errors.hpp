#pragma once

#include <stdexcept>
#include <string>

namespace mcd {

// Missing or ill-formed input data (files, masks of the wrong size, ...).
// The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Degenerate inputs or numerical failure at runtime (no anterior segment,
// degenerate histogram, training divergence, ...). CLI exit code 3.
struct ComputeError : std::runtime_error {
  explicit ComputeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mcd
