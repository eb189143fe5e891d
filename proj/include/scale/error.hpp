#pragma once

#include <stdexcept>
#include <string>

namespace scale {

// Every error raised by the toolkit derives from Error so the CLI can map it to
// a machine-readable record. kind() is the stable identifier written there.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

// Invalid configuration or arguments (rejected before any work starts).
class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config_error"; }
};

// Malformed input file content.
class ParseError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "parse_error"; }
};

// Well-formed input that violates a data invariant.
class ValidationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "validation_error"; }
};

// Text that cannot be expressed in the vocabulary.
class EncodingError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "encoding_error"; }
};

// Caller broke a precondition (shape mismatch, empty input, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "contract_violation"; }
};

// Zero-token segment handed to a per-segment mean.
class DegenerateSegment : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
    const char* kind() const noexcept override { return "degenerate_segment"; }
};

// NaN or infinity where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric_error"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io_error"; }
};

} // namespace scale
