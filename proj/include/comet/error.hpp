#ifndef COMET_ERROR_HPP
#define COMET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace comet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Train-mode batch normalization needs at least two rows.
class BatchSizeError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity showed up where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// A configuration or argument violates a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Messages carry the file and line number.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Not enough qualifying classes to build an episode.
class SamplingError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace comet

#endif
