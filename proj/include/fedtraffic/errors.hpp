#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fedtraffic {

struct InvalidGeometry : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LookupError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct IncompleteControl : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when a gradient computation produces a non-finite value; `layer` is
// the first layer (0-based) whose gradient slice is affected.
struct NumericError : std::runtime_error {
    NumericError(const std::string& what, std::size_t layer)
        : std::runtime_error(what), layer(layer) {}
    std::size_t layer;
};

struct NotReady : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct DeserializationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DuplicateGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::invalid_argument {
    ValidationError(const std::string& what, std::vector<std::string> keys)
        : std::invalid_argument(what), keys(std::move(keys)) {}
    std::vector<std::string> keys;
};

struct IncomparableRuns : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fedtraffic
