#pragma once

#include <stdexcept>
#include <string>

namespace hybridci {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class NumericBlowup : public Error {
public:
    using Error::Error;
};

class InvalidSplit : public Error {
public:
    using Error::Error;
};

// Configuration problems carry the dotted path of the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace hybridci
