#pragma once

#include <stdexcept>
#include <string>

namespace dnf {

// Parameter violations throw std::invalid_argument directly; these cover the
// remaining failure classes that callers may want to handle separately.

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dnf
