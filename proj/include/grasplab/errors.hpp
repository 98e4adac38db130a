#pragma once

#include <stdexcept>
#include <string>

namespace grasplab {

// Invalid user-supplied configuration (sizes, ranges, infeasible specs).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input document. Carries a human-readable location ("line 12",
// "edges[3]") inside the message.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally inconsistent data, e.g. an edge endpoint missing from the
// entity list.
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

// Operation called on an object in the wrong state (unbuilt index).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated a function contract (dimension mismatch, bad probability).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Remote endpoint failure after retries. Messages are sanitized; they never
// contain credentials.
struct TransportError : std::runtime_error {
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace grasplab
