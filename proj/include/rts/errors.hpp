#pragma once

#include <stdexcept>
#include <string>

namespace rts {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InvalidState : public Error {
public:
    using Error::Error;
};

class EmptyMemory : public Error {
public:
    using Error::Error;
};

class InvalidInit : public Error {
public:
    using Error::Error;
};

class InvalidSequence : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

class MissingInput : public Error {
public:
    using Error::Error;
};

}  // namespace rts
