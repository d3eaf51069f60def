#pragma once

#include <stdexcept>
#include <string>

namespace bvmp {

/// Library error carrying a short machine-readable code
/// ("invalid_argument", "config", "io", "collapse", "budget", "endpoint").
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace bvmp
