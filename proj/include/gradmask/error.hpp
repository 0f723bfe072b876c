#pragma once

#include <stdexcept>
#include <string>

namespace gradmask {

// Stable error categories; the C API and the CLI exit codes map onto these.
enum class ErrorCode {
    Shape,       // tensor shape mismatch or invalid extent arithmetic
    Dtype,       // mixed f32/f64 operands
    Validation,  // invalid configuration or argument value
    Domain,      // operation undefined for the given input (e.g. mean of empty)
    Contract,    // API precondition violated (e.g. non-scalar grad target)
    Unsupported, // no second-order rule registered for an op
    Io,          // filesystem failure
    Format,      // corrupt or mismatched file content
    Diverged,    // training produced a non-finite loss
    Internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

const char* error_code_name(ErrorCode code) noexcept;

} // namespace gradmask
