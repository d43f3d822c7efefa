#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace peftlab {

// Error taxonomy. Exit-code mapping lives in the CLI: config/contract/shape/
// data/format/index errors -> 2, numeric failures (training/oracle) -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape-error"; }
};

class ContractError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "contract-error"; }
};

class IndexError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "index-error"; }
};

class DataError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "data-error"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config-error"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "format-error"; }
};

class OracleError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "oracle-error"; }
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& msg, std::size_t step)
        : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
    const char* kind() const noexcept override { return "training-error"; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace peftlab
