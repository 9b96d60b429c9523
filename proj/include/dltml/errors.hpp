#pragma once

#include <stdexcept>
#include <string>

namespace dltml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Arguments that violate a documented precondition.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Overflow, underflow or a singular system inside a numeric routine.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed, mismatched or wrong-version files.
class DataError : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(std::size_t epoch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace dltml
