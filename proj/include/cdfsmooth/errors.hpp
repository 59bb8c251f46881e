#pragma once

#include <stdexcept>
#include <string>

namespace cdfsmooth {

// Input that violates an operation's precondition (too few keys, bad config).
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A virtual-point candidate outside the open key range, or colliding with a key.
struct InvalidCandidate : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DuplicateKey : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed dataset file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A brute-force oracle asked to run beyond its guard rails.
struct OracleLimitExceeded : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace cdfsmooth
