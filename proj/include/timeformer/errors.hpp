#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace timeformer {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between tensors.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value (hyperparameters, presets, file keys).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Violated call contract (non-scalar loss, missing gradient, double backward).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (CSV, config, checkpoint).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Training aborted (divergence, NaN loss). Carries the epoch/step it happened at.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t epoch, std::size_t step)
        : Error(what + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")"),
          epoch_(epoch), step_(step) {}

    std::size_t epoch() const { return epoch_; }
    std::size_t step() const { return step_; }

private:
    std::size_t epoch_;
    std::size_t step_;
};

/// Evaluation could not produce a report (e.g. zero windows).
class ReportError : public Error {
public:
    using Error::Error;
};

/// File system failure (missing file, write error).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace timeformer
