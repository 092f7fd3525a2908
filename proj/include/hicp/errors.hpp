#pragma once

#include <stdexcept>
#include <string>

namespace hicp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyRender : public Error {
public:
    EmptyRender() : Error("render covered no pixels") {}
};

class DegenerateConfiguration : public Error {
public:
    using Error::Error;
};

class SingularSystem : public Error {
public:
    using Error::Error;
};

class SingularInformation : public Error {
public:
    using Error::Error;
};

class EmptyUnion : public Error {
public:
    EmptyUnion() : Error("union of visibility masks is empty") {}
};

class EmptyLog : public Error {
public:
    EmptyLog() : Error("pose estimate log is empty") {}
};

class DiameterTooLarge : public Error {
public:
    using Error::Error;
};

class MeshFormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace hicp
