#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmrl {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configs, violated preconditions, malformed inputs. CLI exit code 2.
struct ValidationError : Error {
    using Error::Error;
};

// Malformed record in an input file; carries the 1-based line number.
struct ParseError : ValidationError {
    ParseError(const std::string& what, std::size_t line)
        : ValidationError(what + " (line " + std::to_string(line) + ")"), line(line) {}
    std::size_t line;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : ValidationError {
    using ValidationError::ValidationError;
};

// A prompt or response required by an operation is missing from a space.
struct CoverageError : ValidationError {
    using ValidationError::ValidationError;
};

// Two policies queried jointly do not share the same candidate set.
struct SpaceMismatchError : ValidationError {
    using ValidationError::ValidationError;
};

// Training produced non-finite parameters; carries the iteration it blew up at.
struct DivergenceError : Error {
    DivergenceError(const std::string& what, std::size_t iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration(iteration) {}
    std::size_t iteration;
};

// Filesystem and I/O failures. CLI exit code 1.
struct IoError : Error {
    using Error::Error;
};

}  // namespace dmrl
