#pragma once

#include <stdexcept>
#include <string>

namespace qcroute {

// Rejected input: malformed files, schema violations, mismatched dimensions.
// Maps to process exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A requested computation has no answer: budget below the cheapest model.
// Maps to process exit code 3.
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

// Inputs are structurally valid but statistically unusable: zero-variance
// samples, a label set with no spread. Maps to process exit code 3.
struct DegenerateError : std::runtime_error {
  explicit DegenerateError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qcroute
