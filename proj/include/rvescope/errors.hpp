#ifndef RVESCOPE_ERRORS_HPP
#define RVESCOPE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rvescope {

// Error taxonomy mirrors the CLI exit-code contract:
//   ConfigError -> 2, IoError -> 3, GenerationError -> 4, NumericalError -> 5.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rvescope

#endif
