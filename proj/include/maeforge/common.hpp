#pragma once

#include <stdexcept>
#include <string>

namespace maeforge {

#ifdef MAEFORGE_REAL32
using Real = float;
#else
using Real = double;
#endif

// Runtime failure (I/O, numeric breakdown, broken state).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rejected input: bad shapes, out-of-domain parameters, malformed files.
struct ValidationError : Error {
    using Error::Error;
};

}  // namespace maeforge
