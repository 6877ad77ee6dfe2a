#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rmd {

/// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

/// A value violated a documented invariant. `field()` names the offender.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A JSON-lines record did not match its schema.
class SchemaError : public Error {
public:
    SchemaError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace rmd
