#pragma once

#include <stdexcept>
#include <string>

namespace neckpinch {

// exit code 2
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// exit code 3: the trajectory left the cylinder regime
struct RegimeExit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// exit code 4
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace neckpinch
