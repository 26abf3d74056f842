#pragma once

#include <stdexcept>
#include <string>

namespace sphervor {

// A parameter or input value is not finite. param_index refers to the flat
// parameter layout of the object that was being validated.
struct NumericError : std::runtime_error {
  NumericError(const std::string& msg, int index)
      : std::runtime_error(msg + " (parameter " + std::to_string(index) + ")"),
        param_index(index) {}
  int param_index = -1;
};

// A candidate index no longer matches the site set it was built for.
struct StaleIndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed model/probe/scene/image file.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sphervor
