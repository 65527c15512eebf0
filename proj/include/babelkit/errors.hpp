#pragma once

#include <stdexcept>
#include <string>

namespace babel {

// Bad inputs: config/file/argument validation. CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures after validation passed (I/O, integrity, overflow mid-run).
// CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
public:
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace babel
