#pragma once

#include <stdexcept>
#include <string>

namespace rffi {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad length, bad rate, bad config).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NoPacketFound : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file / document.
class FormatError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace rffi
