#pragma once

#include <sstream>
#include <stdexcept>

namespace meee {

// Precondition / contract violations (bad arguments, shape mismatches).
template <typename... Parts>
[[noreturn]] void contract_error(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    throw std::invalid_argument(os.str());
}

// Runtime failures (non-convergence, non-finite values mid-computation).
template <typename... Parts>
[[noreturn]] void runtime_fail(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    throw std::runtime_error(os.str());
}

}  // namespace meee
