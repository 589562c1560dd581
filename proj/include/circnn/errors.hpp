#pragma once

#include <stdexcept>
#include <string>

namespace circnn {

// Collapsed normalized forward hit a vanishing product norm (< 1e-300).
struct DegenerateForward : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A probe point handed to the gradient bound lies outside the sampled ball.
struct VNotInBall : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

} // namespace circnn
