#pragma once

#include <stdexcept>
#include <string>

namespace meco {

/// Base class for every error the pipeline raises. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (corrupt shard, bad record, I/O).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid or incomplete configuration (missing vocab, bad fraction, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Failure talking to an external service (annotation endpoint).
class ServiceError : public Error {
public:
    using Error::Error;
};

} // namespace meco
