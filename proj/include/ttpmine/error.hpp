#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttpmine {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed JSON input. byte_offset points at the first offending byte.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : Error(what), byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

// Well-formed JSON that does not have the expected shape.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Input data or configuration violating a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ParameterError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A statistic that is not defined for the given table (e.g. a zero marginal).
class UndefinedMeasureError : public Error {
public:
    using Error::Error;
};

class GraphTypeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ttpmine
