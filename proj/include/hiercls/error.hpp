#pragma once

#include <stdexcept>
#include <string>

namespace hiercls {

/// Base error type for everything the library throws.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when training blows up (non-finite or runaway loss).
struct divergence_error : error {
    using error::error;
};

} // namespace hiercls
