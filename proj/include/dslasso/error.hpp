#pragma once
#include <stdexcept>
#include <string>

namespace dslasso {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error
{
public:
    using Error::Error;
};

class InvalidArgument : public Error
{
public:
    using Error::Error;
};

// Column j lies (numerically) in the span of the remaining weighted columns,
// or a variance/scale quantity collapsed to zero.
class DegenerateError : public Error
{
public:
    using Error::Error;
};

class ConvergenceError : public Error
{
public:
    using Error::Error;
};

} // namespace dslasso
