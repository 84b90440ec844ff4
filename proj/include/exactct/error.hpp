#ifndef EXACTCT_ERROR_HPP
#define EXACTCT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace exactct {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad window, negative scale, ...).
class ArgumentError : public Error
{
public:
    using Error::Error;
};

/// Two volumes that must share a voxel grid do not.
class GridMismatchError : public Error
{
public:
    using Error::Error;
};

/// Malformed file content. `field()` names the offending header field or column.
class ParseError : public Error
{
public:
    ParseError(std::string field, const std::string& what)
        : Error(what), field_(std::move(field))
    {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class UnsupportedTypeError : public Error
{
public:
    using Error::Error;
};

class IoError : public Error
{
public:
    using Error::Error;
};

/// Numerical failure (non-finite loss, empty population, ...).
class NumericError : public Error
{
public:
    using Error::Error;
};

} // namespace exactct

#endif // EXACTCT_ERROR_HPP
