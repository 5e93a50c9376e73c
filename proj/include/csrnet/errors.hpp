#pragma once

#include <stdexcept>
#include <string>

namespace csrnet {

// Failure classes the CLI maps to exit codes: bad arguments -> 2,
// I/O -> 3, parse -> 4, numeric divergence -> 5.

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct parse_error : std::runtime_error {
    explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct divergence_error : std::runtime_error {
    explicit divergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace csrnet
