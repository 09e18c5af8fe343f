#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace antipode {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter violates its documented range.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// An input lacks an attribute the operation requires (normals, curvatures).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A file record could not be parsed. `line()` is 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyCloudError : public Error {
public:
    using Error::Error;
};

/// Least-squares plane fit on collinear or coincident points.
class DegenerateFitError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

}  // namespace antipode
