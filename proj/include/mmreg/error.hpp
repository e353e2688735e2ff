#pragma once

#include <stdexcept>
#include <string>

namespace mmreg {

/// Raised by every operation in the library on a contract violation or bad input.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Pipeline failure tagged with the stage that raised it ("matching: ...").
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace mmreg
