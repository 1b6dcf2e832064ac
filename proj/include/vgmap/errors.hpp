#pragma once

#include <stdexcept>
#include <string>

namespace vgmap {

// Exit codes shared by the CLI. Library code only throws; tools map the
// exception type onto one of these.
enum class ExitCode : int {
    Ok = 0,
    Usage = 1,
    Validation = 2,
    Numerical = 3,
    Io = 4,
    ThresholdFailure = 5,
};

/// Malformed input: bad parameters, schema violations, out-of-range values.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation could not produce a meaningful result (degenerate data).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Wraps an error from one pipeline stage so the caller can report where it
// happened. The exit code of the wrapped error is preserved.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, std::string what, ExitCode code)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)), code_(code)
    {
    }

    const std::string& stage() const noexcept { return stage_; }
    ExitCode code() const noexcept { return code_; }

private:
    std::string stage_;
    ExitCode code_;
};

inline void require(bool cond, const std::string& msg)
{
    if (!cond) {
        throw ValidationError(msg);
    }
}

} // namespace vgmap
