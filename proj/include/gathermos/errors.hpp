#pragma once

#include <stdexcept>

namespace gathermos {

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gathermos
