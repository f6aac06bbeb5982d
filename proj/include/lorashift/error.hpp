#pragma once

#include <stdexcept>
#include <string>

namespace lorashift {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A smooth primitive was evaluated at its singular point (rsqrt of a
/// non-positive value, RMSNorm of the zero vector).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Bad token ids, bad grids, identical margin tokens, ...
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid model or experiment configuration. `field` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Site does not exist in the model, or is already occupied in a LoraSet.
class SiteError : public Error {
public:
    using Error::Error;
};

/// An activation trace was used with a model other than the one that produced it.
class StaleTraceError : public Error {
public:
    using Error::Error;
};

/// Too few usable rows to fit a slope.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Malformed or unsupported serialized file.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace lorashift
